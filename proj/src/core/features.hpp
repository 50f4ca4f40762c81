#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace chorus {

struct AudioClip {
    std::vector<float> samples; // mono, [-1, 1]
    long sample_rate = 0;
};

struct MelSpectrogram {
    long n_mels = 0;
    long n_frames = 0;
    double fps = 0.0;             // sample_rate / hop, kept exact
    std::vector<float> data;      // frame-major: frame t's n_mels bands

    float at(long frame, long band) const {
        return data[static_cast<size_t>(frame * n_mels + band)];
    }
};

// Front-end constants for the default configuration.
constexpr long kSampleRate = 22050;
constexpr long kWindowLength = 2048;
constexpr long kHopLength = 512;
constexpr long kNumMels = 128;

AudioClip load_wav(const std::string& path);
AudioClip resample(const AudioClip& clip, long target_rate);

// STFT magnitude -> 128-band Mel (Slaney spacing, 0..sr/2), no log scaling.
MelSpectrogram mel_spectrogram(const AudioClip& clip);

// Optional log(1 + m) compression.
void apply_log_compression(MelSpectrogram& m);

// Triangular filter center frequencies in Hz, one per band.
std::vector<double> mel_filter_centers(long n_mels, double fmin, double fmax);

// Filter weights, band-major (n_mels x n_bins); exposed for diagnostics.
std::vector<float> mel_filter_weights(long n_mels, long n_bins, double sample_rate);

// DCF1 feature file: magic, u32 version=1, u32 n_mels, u64 n_frames,
// f64 fps, f32 data little-endian frame-major. Round-trips bit-exactly.
void write_features(const MelSpectrogram& m, const std::string& path);
MelSpectrogram read_features(const std::string& path);

} // namespace chorus
