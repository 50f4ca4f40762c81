#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "io.hpp"

namespace fs = std::filesystem;

namespace chorus {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

double parse_seconds(const std::string& field, const std::string& ctx, long line_no) {
    try {
        size_t pos = 0;
        double v = std::stod(field, &pos);
        if (pos != field.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw FormatError(ctx + ": line " + std::to_string(line_no) +
                          ": non-numeric time field '" + field + "'");
    }
}

void merge_chorus(std::vector<Segment>& segs) {
    std::stable_sort(segs.begin(), segs.end(),
                     [](const Segment& a, const Segment& b) { return a.start < b.start; });
    std::vector<Segment> out;
    for (const auto& s : segs) {
        if (s.label == "chorus" && !out.empty() && out.back().label == "chorus" &&
            s.start <= out.back().end) {
            out.back().end = std::max(out.back().end, s.end);
        } else {
            out.push_back(s);
        }
    }
    segs = std::move(out);
}

} // namespace

std::vector<Segment> ChorusAnnotation::chorus_segments() const {
    std::vector<Segment> out;
    for (const auto& s : segments)
        if (s.label == "chorus") out.push_back(s);
    return out;
}

ChorusAnnotation parse_annotation_text(const std::string& text, const std::string& ctx) {
    ChorusAnnotation a;
    std::istringstream is(text);
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = io::split(line, '\t');
        if (fields.size() != 3)
            throw FormatError(ctx + ": line " + std::to_string(line_no) +
                              ": expected start<TAB>end<TAB>label, got " +
                              std::to_string(fields.size()) + " fields");
        Segment s;
        s.start = parse_seconds(fields[0], ctx, line_no);
        s.end = parse_seconds(fields[1], ctx, line_no);
        if (s.end <= s.start)
            throw FormatError(ctx + ": line " + std::to_string(line_no) +
                              ": end <= start");
        if (s.start < 0)
            throw FormatError(ctx + ": line " + std::to_string(line_no) +
                              ": negative start time");
        std::string label = lower(fields[2]);
        s.label = (label == "chorus" || label == "refrain") ? "chorus" : label;
        a.segments.push_back(std::move(s));
        a.duration = std::max(a.duration, a.segments.back().end);
    }
    merge_chorus(a.segments);
    return a;
}

ChorusAnnotation parse_annotation(const std::string& path) {
    return parse_annotation_text(io::read_text_file(path), path);
}

void write_annotation(const ChorusAnnotation& a, const std::string& path) {
    std::ostringstream os;
    os.precision(17); // bit-exact round trip through parse_annotation
    for (const auto& s : a.segments)
        os << s.start << '\t' << s.end << '\t' << s.label << '\n';
    io::write_text_file(path, os.str());
}

std::vector<uint8_t> targets_from_annotation(const ChorusAnnotation& a, long n_seconds) {
    if (n_seconds < 1) throw UsageError("targets_from_annotation: n_seconds < 1");
    std::vector<uint8_t> t(static_cast<size_t>(n_seconds), 0);
    for (const auto& s : a.segments) {
        if (s.label != "chorus") continue;
        const long first = std::max<long>(0, static_cast<long>(std::floor(s.start)));
        const long last = std::min<long>(n_seconds - 1, static_cast<long>(std::ceil(s.end)));
        for (long i = first; i <= last; ++i) {
            const double overlap =
                std::min<double>(i + 1, s.end) - std::max<double>(i, s.start);
            if (overlap >= 0.5) t[i] = 1;
        }
    }
    return t;
}

Crop crop_at(const LabeledExample& ex, long start_frame, long crop_frames) {
    const long n_mels = ex.features.n_mels;
    const long n = ex.features.n_frames;
    if (n < 1) throw UsageError("crop_at: empty track");
    if (crop_frames % kFramesPerSecond != 0)
        throw UsageError("crop_at: crop_frames must be a multiple of " +
                         std::to_string(kFramesPerSecond));
    Crop c;
    c.n_frames = crop_frames;
    c.n_mels = n_mels;
    c.features.resize(static_cast<size_t>(crop_frames * n_mels));
    // loop-tiled read: frame index wraps at the track length
    for (long f = 0; f < crop_frames; ++f) {
        const long src = (start_frame + f) % n;
        std::copy_n(ex.features.data.begin() + src * n_mels, n_mels,
                    c.features.begin() + f * n_mels);
    }
    const long crop_seconds = crop_frames / kFramesPerSecond;
    const long n_sec = static_cast<long>(ex.targets.size());
    if (n_sec < 1) throw UsageError("crop_at: track has no labeled seconds");
    const long start_sec = start_frame / kFramesPerSecond;
    c.targets.resize(static_cast<size_t>(crop_seconds));
    for (long s = 0; s < crop_seconds; ++s)
        c.targets[s] = ex.targets[static_cast<size_t>((start_sec + s) % n_sec)];
    return c;
}

Crop random_crop(const LabeledExample& ex, long crop_frames, Rng& rng) {
    const long n = ex.features.n_frames;
    if (n < 1) throw UsageError("random_crop: empty track");
    // usable whole-second span; crops start on the per-second grid so the
    // sliced targets line up with the head's output
    const long whole_sec = std::max<long>(1, n / kFramesPerSecond);
    const long crop_sec = crop_frames / kFramesPerSecond;
    long start_sec = 0;
    if (whole_sec > crop_sec) start_sec = rng.uniform_int(0, whole_sec - crop_sec);
    return crop_at(ex, start_sec * kFramesPerSecond, crop_frames);
}

SynthSong synth_song(Rng& rng, const SynthConfig& cfg) {
    struct Section {
        char kind; // i, v, c, b, o
        long seconds;
    };
    const long k = rng.uniform_int(cfg.k_min, cfg.k_max);
    std::vector<Section> plan;
    plan.push_back({'i', rng.uniform_int(cfg.intro_min, cfg.intro_max)});
    for (long r = 0; r < k; ++r) {
        plan.push_back({'v', rng.uniform_int(cfg.verse_min, cfg.verse_max)});
        plan.push_back({'c', rng.uniform_int(cfg.chorus_min, cfg.chorus_max)});
    }
    plan.push_back({'b', rng.uniform_int(cfg.bridge_min, cfg.bridge_max)});
    plan.push_back({'c', rng.uniform_int(cfg.chorus_min, cfg.chorus_max)});
    plan.push_back({'o', rng.uniform_int(cfg.outro_min, cfg.outro_max)});

    auto smooth_envelope = [&](long n) {
        std::vector<double> env(static_cast<size_t>(n));
        for (auto& v : env) v = std::exp(cfg.envelope_log_sigma * rng.normal());
        // moving-average smoothing gives correlated neighboring bands
        std::vector<double> sm(env.size());
        const long half = cfg.envelope_smooth / 2;
        for (long i = 0; i < n; ++i) {
            double acc = 0;
            long cnt = 0;
            for (long j = std::max<long>(0, i - half);
                 j <= std::min<long>(n - 1, i + half); ++j, ++cnt)
                acc += env[static_cast<size_t>(j)];
            sm[static_cast<size_t>(i)] = acc / cnt;
        }
        return sm;
    };

    // sections share one low-band base so the chorus boost is the only
    // systematic low-frequency difference; upper bands differ per section
    const auto low_base = smooth_envelope(cfg.low_bands);
    auto make_template = [&](bool low_boost, double boost) {
        auto sm = smooth_envelope(cfg.n_mels);
        for (long b = 0; b < cfg.low_bands; ++b)
            sm[static_cast<size_t>(b)] = low_base[static_cast<size_t>(b)];
        if (low_boost)
            for (long b = 0; b < cfg.low_bands; ++b) sm[static_cast<size_t>(b)] *= boost;
        return sm;
    };

    const bool verse_boost = rng.uniform() < cfg.verse_low_boost_prob;
    std::vector<std::vector<double>> templ(128);
    templ['i'] = make_template(false, 0);
    templ['v'] = make_template(verse_boost, cfg.verse_low_boost);
    templ['c'] = make_template(true, cfg.low_boost);
    templ['b'] = make_template(false, 0);
    templ['o'] = make_template(false, 0);

    long total_sec = 0;
    for (const auto& s : plan) total_sec += s.seconds;

    SynthSong song;
    song.features.n_mels = cfg.n_mels;
    song.features.n_frames = total_sec * cfg.fps;
    song.features.fps = static_cast<double>(cfg.fps);
    song.features.data.resize(
        static_cast<size_t>(song.features.n_frames * cfg.n_mels));

    long cursor_sec = 0;
    for (const auto& sec : plan) {
        const auto& env = templ[static_cast<size_t>(sec.kind)];
        const long f0 = cursor_sec * cfg.fps;
        const long f1 = (cursor_sec + sec.seconds) * cfg.fps;
        for (long f = f0; f < f1; ++f)
            for (long b = 0; b < cfg.n_mels; ++b) {
                double v = env[static_cast<size_t>(b)] +
                           cfg.noise_sigma * rng.normal();
                song.features.data[static_cast<size_t>(f * cfg.n_mels + b)] =
                    static_cast<float>(std::max(0.0, v));
            }
        if (sec.kind == 'c')
            song.annotation.segments.push_back(
                {static_cast<double>(cursor_sec),
                 static_cast<double>(cursor_sec + sec.seconds), "chorus"});
        cursor_sec += sec.seconds;
    }
    song.annotation.duration = static_cast<double>(total_sec);
    return song;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::vector<ManifestEntry> out;
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (base / p).string();
    };
    std::istringstream is(io::read_text_file(path));
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto f = io::split(line, '\t');
        if (f.size() != 4)
            throw FormatError(path + ": line " + std::to_string(line_no) +
                              ": expected 4 tab-separated fields");
        if (f[3] != "train" && f[3] != "val" && f[3] != "test")
            throw FormatError(path + ": line " + std::to_string(line_no) +
                              ": unknown split '" + f[3] + "'");
        out.push_back({f[0], resolve(f[1]), resolve(f[2]), f[3]});
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ostringstream os;
    for (const auto& e : entries)
        os << e.id << '\t' << e.feature_path << '\t' << e.annotation_path << '\t'
           << e.split << '\n';
    io::write_text_file(path, os.str());
}

void synth_corpus(const std::string& out_dir, long n_songs, uint64_t seed,
                  const SynthConfig& cfg) {
    if (n_songs < 1) throw UsageError("synth_corpus: need at least one song");
    fs::create_directories(out_dir);
    Rng rng(seed);
    std::vector<ManifestEntry> manifest;
    const long n_test = std::max<long>(1, n_songs / 10);
    const long n_val = std::max<long>(1, n_songs / 10);
    for (long i = 0; i < n_songs; ++i) {
        auto song = synth_song(rng, cfg);
        char id[32];
        std::snprintf(id, sizeof id, "song_%04ld", i);
        const std::string feat = id + std::string(".dcf");
        const std::string ann = id + std::string(".tsv");
        write_features(song.features, (fs::path(out_dir) / feat).string());
        write_annotation(song.annotation, (fs::path(out_dir) / ann).string());
        const char* split = i < n_songs - n_val - n_test ? "train"
                            : i < n_songs - n_test       ? "val"
                                                         : "test";
        manifest.push_back({id, feat, ann, split});
    }
    write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());
}

LabeledExample load_example(const ManifestEntry& entry) {
    LabeledExample ex;
    ex.song_id = entry.id;
    ex.features = read_features(entry.feature_path);
    auto ann = parse_annotation(entry.annotation_path);
    const long n_sec = std::max<long>(1, ex.features.n_frames / kFramesPerSecond);
    ex.targets = targets_from_annotation(ann, n_sec);
    return ex;
}

std::vector<double> low_band_energy_curve(const MelSpectrogram& m, long low_bands) {
    const long n_sec = m.n_frames / kFramesPerSecond;
    if (n_sec < 1) throw UsageError("low_band_energy_curve: track shorter than 1 second");
    std::vector<double> curve(static_cast<size_t>(n_sec), 0.0);
    for (long s = 0; s < n_sec; ++s) {
        double acc = 0;
        for (long f = s * kFramesPerSecond; f < (s + 1) * kFramesPerSecond; ++f)
            for (long b = 0; b < low_bands; ++b) acc += m.at(f, b);
        curve[static_cast<size_t>(s)] = acc / (kFramesPerSecond * low_bands);
    }
    const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
    const double lo = *lo_it, range = *hi_it - *lo_it;
    if (range > 0)
        for (auto& v : curve) v = (v - lo) / range;
    return curve;
}

} // namespace chorus
