#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "core/io.hpp"
#include "core/metrics.hpp"

using namespace chorus;
namespace fs = std::filesystem;

namespace {

// All-pairs Mann-Whitney enumeration, the slow reference.
double pair_auc(const std::vector<double>& s, const std::vector<uint8_t>& t) {
    double num = 0;
    long pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (!t[i]) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (t[j]) continue;
            ++pairs;
            if (s[i] > s[j]) num += 1.0;
            else if (s[i] == s[j]) num += 0.5;
        }
    }
    return num / pairs;
}

} // namespace

TEST_CASE("prf worked examples") {
    auto perfect = prf({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    auto half = prf({1, 1, 1, 1}, {1, 1, 0, 0});
    CHECK(half.precision == 0.5);
    CHECK(half.recall == 1.0);
    CHECK(half.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(half.tp == 2);
    CHECK(half.fp == 2);

    auto degenerate = prf({0, 0, 0}, {1, 1, 0});
    CHECK(degenerate.precision == 0.0);
    CHECK(degenerate.recall == 0.0);
    CHECK(degenerate.f1 == 0.0);
}

TEST_CASE("prf rejects mismatched lengths") {
    CHECK_THROWS_AS(prf({1, 0}, {1}), UsageError);
}

TEST_CASE("prf f1 is the harmonic mean of its own precision and recall") {
    Rng rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<uint8_t> p(20), t(20);
        for (size_t i = 0; i < 20; ++i) {
            p[i] = rng.uniform() < 0.5;
            t[i] = rng.uniform() < 0.5;
        }
        auto r = prf(p, t);
        if (r.precision + r.recall > 0)
            CHECK(r.f1 == doctest::Approx(2 * r.precision * r.recall /
                                          (r.precision + r.recall)));
        CHECK(r.tp + r.fp + r.fn + r.tn == 20);
    }
}

TEST_CASE("auc worked examples") {
    CHECK(*auc({0.1, 0.9}, {0, 1}) == 1.0);
    CHECK(*auc({0.5, 0.5}, {0, 1}) == 0.5);
    CHECK(*auc({0.9, 0.1}, {0, 1}) == 0.0);
}

TEST_CASE("auc is undefined for single-class truth") {
    CHECK(!auc({0.1, 0.9}, {1, 1}).has_value());
    CHECK(!auc({0.1, 0.9}, {0, 0}).has_value());
}

TEST_CASE("auc equals all-pairs enumeration on 50 random instances") {
    Rng rng(11);
    int done = 0;
    while (done < 50) {
        const long n = 2 + rng.uniform_int(0, 18);
        std::vector<double> s(n);
        std::vector<uint8_t> t(n);
        for (long i = 0; i < n; ++i) {
            // coarse grid makes ties frequent
            s[i] = std::floor(rng.uniform() * 5) / 5.0;
            t[i] = rng.uniform() < 0.5;
        }
        auto a = auc(s, t);
        if (!a) continue;
        ++done;
        CHECK(*a == doctest::Approx(pair_auc(s, t)).epsilon(1e-12));
    }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
    Rng rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        const long n = 5 + rng.uniform_int(0, 30);
        std::vector<double> s(n);
        std::vector<uint8_t> t(n);
        for (long i = 0; i < n; ++i) {
            s[i] = rng.uniform();
            t[i] = rng.uniform() < 0.4;
        }
        auto base = auc(s, t);
        if (!base) continue;
        const double a = 0.5 + 2.0 * rng.uniform();
        const double b = rng.normal();
        std::vector<double> mapped(n);
        for (long i = 0; i < n; ++i) mapped[i] = std::exp(a * s[i]) + b * 0 + a * s[i];
        CHECK(*auc(mapped, t) == doctest::Approx(*base).epsilon(1e-12));
    }
}

TEST_CASE("frozen golden cases for prf and auc") {
    struct Case {
        std::vector<uint8_t> pred;
        std::vector<uint8_t> truth;
        std::vector<double> scores;
        double f1, auc_v;
    };
    // hand-computed once; guards against silent redefinition
    const std::vector<Case> cases = {
        {{1, 1, 0, 0}, {1, 0, 1, 0}, {0.8, 0.6, 0.4, 0.2}, 0.5, 0.75},
        {{0, 1, 1, 1, 0}, {0, 0, 1, 1, 1}, {0.1, 0.5, 0.9, 0.7, 0.3}, 2.0 / 3.0, 5.0 / 6.0},
        {{1, 1, 1}, {1, 1, 1}, {0.9, 0.8, 0.7}, 1.0, -1.0}, // auc undefined
        {{0, 0, 1}, {1, 0, 1}, {0.2, 0.2, 0.2}, 2.0 / 3.0, 0.5},
        {{1, 0, 0, 0}, {0, 1, 1, 1}, {0.9, 0.1, 0.2, 0.3}, 0.0, 0.0},
        {{1, 0, 1, 0, 1, 0}, {1, 1, 1, 0, 0, 0},
         {0.9, 0.4, 0.8, 0.3, 0.6, 0.1}, 2.0 / 3.0, 8.0 / 9.0},
        {{0, 0}, {0, 1}, {0.3, 0.6}, 0.0, 1.0},
        {{1, 1}, {0, 1}, {0.6, 0.3}, 2.0 / 3.0, 0.0},
        {{1, 0, 1, 1}, {1, 0, 0, 1}, {1.0, 0.0, 0.5, 0.5}, 0.8, 0.875},
        {{0, 1, 0, 1, 0}, {0, 1, 0, 1, 0}, {0.1, 0.9, 0.1, 0.9, 0.1}, 1.0, 1.0},
    };
    for (const auto& c : cases) {
        CHECK(prf(c.pred, c.truth).f1 == doctest::Approx(c.f1).epsilon(1e-12));
        auto a = auc(c.scores, c.truth);
        if (c.auc_v < 0)
            CHECK(!a.has_value());
        else
            CHECK(*a == doctest::Approx(c.auc_v).epsilon(1e-12));
    }
}

TEST_CASE("ssm of identical rows is all zeros") {
    std::vector<double> rows = {1, 2, 3, 1, 2, 3, 1, 2, 3};
    for (auto d : {Distance::Euclidean, Distance::Cosine}) {
        auto m = ssm(rows, 3, 3, d);
        for (double v : m) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("ssm of orthogonal unit rows is 1 off-diagonal under cosine") {
    std::vector<double> rows = {1, 0, 0, 1};
    auto m = ssm(rows, 2, 2, Distance::Cosine);
    CHECK(m[0] == 0.0);
    CHECK(m[3] == 0.0);
    CHECK(m[1] == doctest::Approx(1.0));
    CHECK(m[2] == doctest::Approx(1.0));
}

TEST_CASE("ssm matches the naive euclidean loop on random 5x3 input") {
    Rng rng(17);
    std::vector<double> rows(15);
    for (auto& v : rows) v = rng.normal();
    auto m = ssm(rows, 5, 3, Distance::Euclidean);
    for (long i = 0; i < 5; ++i)
        for (long j = 0; j < 5; ++j) {
            double s = 0;
            for (long k = 0; k < 3; ++k) {
                const double d = rows[i * 3 + k] - rows[j * 3 + k];
                s += d * d;
            }
            CHECK(m[i * 5 + j] == doctest::Approx(std::sqrt(s)).epsilon(1e-6));
        }
}

TEST_CASE("ssm is symmetric, zero-diagonal and non-negative") {
    Rng rng(19);
    std::vector<double> rows(7 * 4);
    for (auto& v : rows) v = rng.normal();
    for (auto d : {Distance::Euclidean, Distance::Cosine}) {
        auto m = ssm(rows, 7, 4, d);
        for (long i = 0; i < 7; ++i) {
            CHECK(m[i * 7 + i] == 0.0);
            for (long j = 0; j < 7; ++j) {
                CHECK(m[i * 7 + j] == m[j * 7 + i]);
                CHECK(m[i * 7 + j] >= 0.0);
            }
        }
    }
}

TEST_CASE("summarize averages per-song metrics and skips undefined AUC") {
    SongEval a{"a", prf({1, 1}, {1, 1}), 1.0};
    SongEval b{"b", prf({1, 1, 1, 1}, {1, 1, 0, 0}), 0.5};
    SongEval c{"c", prf({1, 1}, {1, 1}), std::nullopt};
    auto r = summarize({a, b, c});
    CHECK(r.mean_f1 == doctest::Approx((1.0 + 2.0 / 3.0 + 1.0) / 3.0));
    CHECK(r.mean_auc == doctest::Approx(0.75));
    CHECK(r.auc_defined == 2);
}

TEST_CASE("report.tsv carries one row per song plus MEAN") {
    auto dir = fs::temp_directory_path() / "chorus_metrics_tests";
    fs::create_directories(dir);
    auto path = (dir / "report.tsv").string();
    SongEval a{"song_a", prf({1, 0}, {1, 1}), 0.9};
    SongEval b{"song_b", prf({0, 1}, {0, 1}), std::nullopt};
    write_report(summarize({a, b}), path);
    auto text = io::read_text_file(path);
    auto lines = io::split(text, '\n');
    REQUIRE(lines.size() >= 4);
    CHECK(lines[0].rfind("id\tf1", 0) == 0);
    CHECK(lines[1].rfind("song_a\t", 0) == 0);
    CHECK(lines[2].find("nan") != std::string::npos);
    CHECK(lines[3].rfind("MEAN\t", 0) == 0);
}
