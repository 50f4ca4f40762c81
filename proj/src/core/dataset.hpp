#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "features.hpp"
#include "postprocess.hpp"

namespace chorus {

// Model frames per second on the feature grid (22050 / 512, floored to the
// integer grid the per-second head uses).
constexpr long kFramesPerSecond = 43;

struct Segment {
    double start = 0.0;
    double end = 0.0;
    std::string label;
};

struct ChorusAnnotation {
    std::vector<Segment> segments; // sorted by start; chorus entries merged
    double duration = 0.0;

    std::vector<Segment> chorus_segments() const;
};

struct LabeledExample {
    MelSpectrogram features;
    std::vector<uint8_t> targets; // one per second
    std::string song_id;
};

struct Crop {
    std::vector<float> features; // crop_frames x n_mels, frame-major
    std::vector<uint8_t> targets;
    long n_frames = 0;
    long n_mels = 0;
};

// TSV: start<TAB>end<TAB>label per line. "chorus"/"refrain" (any case)
// canonicalize to "chorus"; overlapping or touching chorus segments merge.
ChorusAnnotation parse_annotation(const std::string& path);
ChorusAnnotation parse_annotation_text(const std::string& text, const std::string& ctx);
void write_annotation(const ChorusAnnotation& a, const std::string& path);

// Second i (covering [i, i+1)) is positive iff at least half of it overlaps
// a chorus segment.
std::vector<uint8_t> targets_from_annotation(const ChorusAnnotation& a, long n_seconds);

// Uniform random crop on the second-aligned grid; short tracks are
// loop-tiled end-to-start first.
Crop random_crop(const LabeledExample& ex, long crop_frames, Rng& rng);
Crop crop_at(const LabeledExample& ex, long start_frame, long crop_frames);

// ---- synthetic corpus ----

struct SynthConfig {
    long n_mels = 128;
    long fps = kFramesPerSecond;
    long low_bands = 16;        // bands carrying the chorus energy boost
    double low_boost = 1.5;     // +50%
    double noise_sigma = 0.1;
    double envelope_log_sigma = 0.65;
    long envelope_smooth = 17;
    // section duration bounds, whole seconds
    long intro_min = 4, intro_max = 7;
    long verse_min = 8, verse_max = 13;
    long chorus_min = 8, chorus_max = 13;
    // bridges stay >= 5 s so the 9-sample median filter cannot erase the
    // gap between the two choruses around them
    long bridge_min = 5, bridge_max = 8;
    long outro_min = 4, outro_max = 7;
    long k_min = 2, k_max = 3; // verse-chorus repetitions
    // fraction of songs whose verse template also gets a low-band boost,
    // making the absolute low-band cue unreliable across songs
    double verse_low_boost_prob = 0.25;
    double verse_low_boost = 1.35;
};

struct SynthSong {
    MelSpectrogram features;
    ChorusAnnotation annotation;
};

// intro - (verse chorus) x k - bridge - chorus - outro, integer-second
// boundaries; all chorus instances share one spectral template.
SynthSong synth_song(Rng& rng, const SynthConfig& cfg = {});

// ---- corpus on disk ----

struct ManifestEntry {
    std::string id;
    std::string feature_path;
    std::string annotation_path;
    std::string split; // train | val | test
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// Writes .dcf + .tsv per song plus manifest.tsv with an 80/10/10 split.
void synth_corpus(const std::string& out_dir, long n_songs, uint64_t seed,
                  const SynthConfig& cfg = {});

LabeledExample load_example(const ManifestEntry& entry);

// Low-band-energy oracle: per-second mean of the boosted bands, min-max
// normalized. A competent baseline on the synthetic corpus and the floor
// any trained model has to beat.
std::vector<double> low_band_energy_curve(const MelSpectrogram& m, long low_bands = 16);

} // namespace chorus
