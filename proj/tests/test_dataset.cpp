#include "doctest.h"

#include <filesystem>
#include <numeric>

#include "core/dataset.hpp"
#include "core/io.hpp"

using namespace chorus;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    auto d = fs::temp_directory_path() / "chorus_dataset_tests";
    fs::create_directories(d);
    return d;
}

LabeledExample ramp_example(long n_frames, long n_mels = 4) {
    LabeledExample ex;
    ex.song_id = "ramp";
    ex.features.n_mels = n_mels;
    ex.features.n_frames = n_frames;
    ex.features.fps = kFramesPerSecond;
    ex.features.data.resize(static_cast<size_t>(n_frames * n_mels));
    for (long f = 0; f < n_frames; ++f)
        for (long b = 0; b < n_mels; ++b)
            ex.features.data[static_cast<size_t>(f * n_mels + b)] =
                static_cast<float>(f);
    const long n_sec = std::max<long>(1, n_frames / kFramesPerSecond);
    ex.targets.resize(static_cast<size_t>(n_sec));
    for (long s = 0; s < n_sec; ++s) ex.targets[static_cast<size_t>(s)] =
        static_cast<uint8_t>(s % 2);
    return ex;
}

} // namespace

TEST_CASE("chorus and refrain labels canonicalize to chorus") {
    auto a = parse_annotation_text("10.0\t40.0\tchorus\n60.0\t90.0\tREFRAIN\n", "t");
    auto ch = a.chorus_segments();
    REQUIRE(ch.size() == 2);
    CHECK(ch[0].start == 10.0);
    CHECK(ch[0].end == 40.0);
    CHECK(ch[1].start == 60.0);
    CHECK(ch[1].end == 90.0);
}

TEST_CASE("overlapping chorus segments merge") {
    auto a = parse_annotation_text("10\t40\tchorus\n35\t50\tchorus\n", "t");
    auto ch = a.chorus_segments();
    REQUIRE(ch.size() == 1);
    CHECK(ch[0].start == 10.0);
    CHECK(ch[0].end == 50.0);
}

TEST_CASE("adjacent chorus segments merge, non-chorus labels survive") {
    auto a = parse_annotation_text("0\t5\tverse\n10\t20\tchorus\n20\t30\tchorus\n", "t");
    CHECK(a.segments.size() == 2);
    auto ch = a.chorus_segments();
    REQUIRE(ch.size() == 1);
    CHECK(ch[0].end == 30.0);
}

TEST_CASE("reversed segment is a parse error naming line 1") {
    try {
        parse_annotation_text("40\t10\tchorus\n", "t");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("non-numeric field is a parse error with line number") {
    try {
        parse_annotation_text("0\t5\tverse\nten\t20\tchorus\n", "t");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("annotation round-trips through a file") {
    auto a = parse_annotation_text("1.5\t9.25\tchorus\n12\t14\tverse\n", "t");
    auto p = (tmp_dir() / "ann.tsv").string();
    write_annotation(a, p);
    auto b = parse_annotation(p);
    REQUIRE(b.segments.size() == a.segments.size());
    for (size_t i = 0; i < a.segments.size(); ++i) {
        CHECK(b.segments[i].start == a.segments[i].start);
        CHECK(b.segments[i].end == a.segments[i].end);
        CHECK(b.segments[i].label == a.segments[i].label);
    }
}

TEST_CASE("targets: aligned chorus marks exactly its seconds") {
    auto a = parse_annotation_text("10\t40\tchorus\n", "t");
    auto t = targets_from_annotation(a, 50);
    for (long i = 0; i < 50; ++i) CHECK(t[i] == (i >= 10 && i < 40 ? 1 : 0));
}

TEST_CASE("targets: sub-half-second overlaps stay zero") {
    auto a = parse_annotation_text("10.6\t11.4\tchorus\n", "t");
    auto t = targets_from_annotation(a, 12);
    CHECK(t[10] == 0);
    CHECK(t[11] == 0);
}

TEST_CASE("targets: exactly half a second counts") {
    auto a = parse_annotation_text("10.5\t12.0\tchorus\n", "t");
    auto t = targets_from_annotation(a, 13);
    CHECK(t[10] == 1);
    CHECK(t[11] == 1);
    CHECK(t[12] == 0);
}

TEST_CASE("targets: no segments means all zeros") {
    ChorusAnnotation a;
    a.duration = 5;
    auto t = targets_from_annotation(a, 5);
    CHECK(std::accumulate(t.begin(), t.end(), 0) == 0);
}

TEST_CASE("crop of an exactly 3096-frame track is the whole track") {
    auto ex = ramp_example(3096);
    Rng rng(3);
    auto c = random_crop(ex, 3096, rng);
    CHECK(c.n_frames == 3096);
    CHECK(c.features.size() == ex.features.data.size());
    CHECK(c.features == ex.features.data);
    CHECK(c.targets == ex.targets);
}

TEST_CASE("forced start 43 on a 6192-frame track gives seconds 1..72") {
    auto ex = ramp_example(6192);
    auto c = crop_at(ex, 43, 3096);
    REQUIRE(c.targets.size() == 72);
    for (long s = 0; s < 72; ++s) CHECK(c.targets[s] == ex.targets[s + 1]);
    CHECK(c.features[0] == 43.0f);
}

TEST_CASE("short tracks are loop-tiled") {
    auto ex = ramp_example(1000);
    Rng rng(5);
    auto c = random_crop(ex, 3096, rng);
    CHECK(c.n_frames == 3096);
    // frame f of the crop reads source frame f mod 1000
    for (long f : {0L, 999L, 1000L, 2500L, 3095L})
        CHECK(c.features[static_cast<size_t>(f * 4)] == static_cast<float>(f % 1000));
}

TEST_CASE("random_crop stays in bounds for arbitrary lengths") {
    Rng rng(7);
    for (int rep = 0; rep < 1000; ++rep) {
        const long n = 1 + rng.uniform_int(0, 9999);
        auto ex = ramp_example(n, 2);
        auto c = random_crop(ex, 3096, rng);
        CHECK(c.n_frames == 3096);
        CHECK(c.targets.size() == 72);
        for (float v : c.features) CHECK(v < static_cast<float>(n));
    }
}

TEST_CASE("random_crop on an empty track is a usage error") {
    LabeledExample ex;
    ex.features.n_mels = 4;
    Rng rng(0);
    CHECK_THROWS_AS(random_crop(ex, 3096, rng), UsageError);
}

TEST_CASE("synth_song structure: k+1 chorus segments, integer boundaries") {
    Rng rng(0);
    auto song = synth_song(rng);
    auto ch = song.annotation.chorus_segments();
    CHECK(ch.size() >= 3); // k in {2,3} gives 3 or 4 instances
    CHECK(ch.size() <= 4);
    CHECK(song.features.n_frames ==
          static_cast<long>(song.annotation.duration) * kFramesPerSecond);
    for (const auto& s : ch) {
        CHECK(s.start == std::floor(s.start));
        CHECK(s.end == std::floor(s.end));
    }
}

TEST_CASE("chorus low-band energy exceeds verse low-band energy per song") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        auto song = synth_song(rng);
        auto targets = targets_from_annotation(
            song.annotation, static_cast<long>(song.annotation.duration));
        double ch = 0, non = 0;
        long n_ch = 0, n_non = 0;
        const auto& m = song.features;
        for (long s = 0; s < static_cast<long>(targets.size()); ++s) {
            double acc = 0;
            for (long f = s * kFramesPerSecond; f < (s + 1) * kFramesPerSecond; ++f)
                for (long b = 0; b < 16; ++b) acc += m.at(f, b);
            if (targets[s]) {
                ch += acc;
                ++n_ch;
            } else {
                non += acc;
                ++n_non;
            }
        }
        CHECK(ch / n_ch > non / n_non);
    }
}

TEST_CASE("targets from a synthetic annotation mark exactly the chorus seconds") {
    Rng rng(23);
    auto song = synth_song(rng);
    auto t = targets_from_annotation(song.annotation,
                                     static_cast<long>(song.annotation.duration));
    std::vector<uint8_t> expect(t.size(), 0);
    for (const auto& s : song.annotation.chorus_segments())
        for (long i = static_cast<long>(s.start); i < static_cast<long>(s.end); ++i)
            expect[static_cast<size_t>(i)] = 1;
    CHECK(t == expect);
}

TEST_CASE("two chorus instances share a template within noise") {
    Rng rng(41);
    auto song = synth_song(rng);
    auto ch = song.annotation.chorus_segments();
    REQUIRE(ch.size() >= 2);
    const auto& m = song.features;
    auto mean_bands = [&](const Segment& s) {
        std::vector<double> mb(static_cast<size_t>(m.n_mels), 0.0);
        const long f0 = static_cast<long>(s.start) * kFramesPerSecond;
        const long f1 = static_cast<long>(s.end) * kFramesPerSecond;
        for (long f = f0; f < f1; ++f)
            for (long b = 0; b < m.n_mels; ++b) mb[static_cast<size_t>(b)] += m.at(f, b);
        for (auto& v : mb) v /= (f1 - f0);
        return mb;
    };
    auto a = mean_bands(ch[0]);
    auto b = mean_bands(ch[1]);
    double diff = 0;
    for (long i = 0; i < m.n_mels; ++i) diff += std::abs(a[i] - b[i]);
    diff /= m.n_mels;
    CHECK(diff <= 0.2); // 2 sigma with the default noise level
}

TEST_CASE("synth corpus writes manifest with an 80/10/10 split that loads back") {
    auto dir = (tmp_dir() / "corpus").string();
    fs::remove_all(dir);
    synth_corpus(dir, 20, 7);
    auto manifest = read_manifest((fs::path(dir) / "manifest.tsv").string());
    REQUIRE(manifest.size() == 20);
    long n_train = 0, n_val = 0, n_test = 0;
    for (const auto& e : manifest) {
        if (e.split == "train") ++n_train;
        if (e.split == "val") ++n_val;
        if (e.split == "test") ++n_test;
    }
    CHECK(n_train == 16);
    CHECK(n_val == 2);
    CHECK(n_test == 2);
    auto ex = load_example(manifest.front());
    CHECK(ex.features.n_mels == 128);
    CHECK(ex.targets.size() ==
          static_cast<size_t>(ex.features.n_frames / kFramesPerSecond));
}

TEST_CASE("synth corpus generation is seed-reproducible") {
    auto d1 = (tmp_dir() / "seed_a").string();
    auto d2 = (tmp_dir() / "seed_b").string();
    fs::remove_all(d1);
    fs::remove_all(d2);
    synth_corpus(d1, 3, 99);
    synth_corpus(d2, 3, 99);
    for (int i = 0; i < 3; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "song_%04d.dcf", i);
        CHECK(io::read_text_file((fs::path(d1) / name).string()) ==
              io::read_text_file((fs::path(d2) / name).string()));
    }
}

TEST_CASE("low-band baseline separates the default synthetic corpus, F1 >= 0.9") {
    Rng rng(7);
    double f1_sum = 0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
        auto song = synth_song(rng);
        auto truth = targets_from_annotation(
            song.annotation, static_cast<long>(song.annotation.duration));
        auto curve = low_band_energy_curve(song.features);
        auto mask = postprocess_curve(curve);
        REQUIRE(mask.values.size() == truth.size());
        long tp = 0, fp = 0, fn = 0;
        for (size_t s = 0; s < truth.size(); ++s) {
            tp += mask.values[s] && truth[s];
            fp += mask.values[s] && !truth[s];
            fn += !mask.values[s] && truth[s];
        }
        f1_sum += tp ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    }
    CHECK(f1_sum / n >= 0.9);
}
