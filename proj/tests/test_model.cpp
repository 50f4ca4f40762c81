#include "doctest.h"

#include <filesystem>

#include "core/gradcheck.hpp"
#include "core/model.hpp"

using namespace chorus;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    auto d = fs::temp_directory_path() / "chorus_model_tests";
    fs::create_directories(d);
    return d;
}

// Small end-to-end configuration sized for finite-difference checks.
ModelConfig tiny_config() {
    ModelConfig c;
    c.preset = "tiny";
    c.n_mels = 16;
    c.stem_c1 = 2;
    c.stem_c2 = 3;
    c.stem_out = 4;
    c.n_branches = 2;
    c.branch_width = 4;
    c.fusion_rounds = 1;
    c.d_x = 4;
    c.n_blocks = 1;
    c.d_s = 4;
    c.down_channels = 6;
    c.head_channels = 4;
    c.fps = 5;
    return c;
}

template <class S>
TensorPtr<S> random_tensor(std::vector<long> dims, Rng& rng, double scale = 1.0) {
    auto t = make_tensor<S>(std::move(dims));
    for (auto& v : t->data) v = static_cast<S>(scale * rng.normal());
    return t;
}

// Brute-force scaled dot-product attention, double loops everywhere.
std::vector<double> naive_attention(const AlignedVec<double>& x, long T, long dx,
                                    const AlignedVec<double>& wq,
                                    const AlignedVec<double>& wk,
                                    const AlignedVec<double>& wv, long ds) {
    auto project = [&](const AlignedVec<double>& w) {
        std::vector<double> p(static_cast<size_t>(T * ds), 0.0);
        for (long t = 0; t < T; ++t)
            for (long o = 0; o < ds; ++o)
                for (long i = 0; i < dx; ++i)
                    p[t * ds + o] += x[t * dx + i] * w[i * ds + o];
        return p;
    };
    auto q = project(wq), k = project(wk), v = project(wv);
    std::vector<double> out(static_cast<size_t>(T * ds), 0.0);
    for (long i = 0; i < T; ++i) {
        std::vector<double> scores(static_cast<size_t>(T), 0.0);
        for (long j = 0; j < T; ++j) {
            for (long d = 0; d < ds; ++d) scores[j] += q[i * ds + d] * k[j * ds + d];
            scores[j] /= std::sqrt(double(ds));
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double z = 0;
        for (auto& s : scores) {
            s = std::exp(s - mx);
            z += s;
        }
        for (long j = 0; j < T; ++j)
            for (long d = 0; d < ds; ++d)
                out[i * ds + d] += scores[j] / z * v[j * ds + d];
    }
    return out;
}

} // namespace

TEST_CASE("self_attention matches the quadratic oracle on 50 random instances") {
    Rng rng(101);
    for (int rep = 0; rep < 50; ++rep) {
        const long T = 1 + rng.uniform_int(0, 15);
        const long dx = 1 + rng.uniform_int(0, 7);
        const long ds = 1 + rng.uniform_int(0, 7);
        auto x = random_tensor<double>({T, dx}, rng);
        auto wq = random_tensor<double>({dx, ds}, rng);
        auto wk = random_tensor<double>({dx, ds}, rng);
        auto wv = random_tensor<double>({dx, ds}, rng);
        Graph<double> g(false);
        auto s = self_attention(g, x, wq, wk, wv);
        auto ref = naive_attention(x->data, T, dx, wq->data, wk->data, wv->data, ds);
        REQUIRE(s->dims == std::vector<long>{T, ds});
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(s->data[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
}

TEST_CASE("attention weight rows sum to one") {
    Rng rng(7);
    auto x = random_tensor<double>({12, 6}, rng);
    auto wq = random_tensor<double>({6, 5}, rng);
    auto wk = random_tensor<double>({6, 5}, rng);
    Graph<double> g(false);
    auto scores = g.scale(g.matmul(g.matmul(x, wq), g.transpose(g.matmul(x, wk))),
                          1.0 / std::sqrt(5.0));
    auto w = g.softmax(scores, 1);
    for (long i = 0; i < 12; ++i) {
        double row = 0;
        for (long j = 0; j < 12; ++j) row += w->data[i * 12 + j];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("attention with one frame reduces to the value projection") {
    Rng rng(13);
    auto x = random_tensor<double>({1, 6}, rng);
    auto wq = random_tensor<double>({6, 4}, rng);
    auto wk = random_tensor<double>({6, 4}, rng);
    auto wv = random_tensor<double>({6, 4}, rng);
    Graph<double> g(false);
    auto s = self_attention(g, x, wq, wk, wv);
    auto expect = g.matmul(x, wv);
    for (long i = 0; i < 4; ++i)
        CHECK(s->data[i] == doctest::Approx(expect->data[i]).epsilon(1e-12));
}

TEST_CASE("identical frames get identical attention outputs") {
    Rng rng(17);
    auto x = random_tensor<double>({5, 6}, rng);
    // frames 1 and 3 identical
    for (long c = 0; c < 6; ++c) x->data[3 * 6 + c] = x->data[1 * 6 + c];
    auto wq = random_tensor<double>({6, 6}, rng);
    auto wk = random_tensor<double>({6, 6}, rng);
    auto wv = random_tensor<double>({6, 6}, rng);
    Graph<double> g(false);
    auto s = self_attention(g, x, wq, wk, wv);
    for (long c = 0; c < 6; ++c)
        CHECK(s->data[1 * 6 + c] == doctest::Approx(s->data[3 * 6 + c]).epsilon(1e-12));
}

TEST_CASE("stem of an all-zero spectrogram is identical for every frame") {
    Rng rng(1);
    auto m = build_model<double>(tiny_config(), rng);
    MelSpectrogram mel;
    mel.n_mels = 16;
    mel.n_frames = 30;
    mel.fps = 43;
    mel.data.assign(static_cast<size_t>(16 * 30), 0.0f);
    Graph<double> g(false);
    auto e = stem_forward(g, m, features_to_input<double>(mel));
    REQUIRE(e->dims == std::vector<long>{30, 4});
    for (long t = 1; t < 30; ++t)
        for (long c = 0; c < 4; ++c)
            CHECK(e->data[t * 4 + c] == doctest::Approx(e->data[c]).epsilon(1e-12));
}

TEST_CASE("stem preserves a single frame") {
    Rng rng(2);
    auto m = build_model<double>(tiny_config(), rng);
    MelSpectrogram mel;
    mel.n_mels = 16;
    mel.n_frames = 1;
    mel.fps = 43;
    mel.data.assign(16, 0.5f);
    Graph<double> g(false);
    auto e = stem_forward(g, m, features_to_input<double>(mel));
    CHECK(e->dims == std::vector<long>{1, 4});
}

TEST_CASE("stem receptive field is two frames on each side") {
    Rng base_rng(3);
    auto m = build_model<double>(tiny_config(), base_rng);
    Rng rng(33);
    MelSpectrogram a;
    a.n_mels = 16;
    a.n_frames = 40;
    a.fps = 43;
    a.data.resize(static_cast<size_t>(16 * 40));
    for (auto& v : a.data) v = static_cast<float>(std::abs(rng.normal()));
    auto b = a;
    const long j = 20;
    for (long f = 0; f < 16; ++f) b.data[j * 16 + f] += 1.0f;
    Graph<double> g(false);
    auto ea = stem_forward(g, m, features_to_input<double>(a));
    auto eb = stem_forward(g, m, features_to_input<double>(b));
    for (long t = 0; t < 40; ++t) {
        double diff = 0;
        for (long c = 0; c < 4; ++c)
            diff = std::max(diff, std::abs(ea->data[t * 4 + c] - eb->data[t * 4 + c]));
        if (t < j - 2 || t > j + 2)
            CHECK(diff == 0.0);
    }
    double at_j = 0;
    for (long c = 0; c < 4; ++c)
        at_j = std::max(at_j, std::abs(ea->data[j * 4 + c] - eb->data[j * 4 + c]));
    CHECK(at_j > 0.0);
}

TEST_CASE("multiscale output shape is T x d_x for assorted lengths") {
    Rng rng(4);
    auto m = build_model<double>(tiny_config(), rng);
    for (long T : {4L, 5L, 16L, 43L, 100L, 301L}) {
        auto e = random_tensor<double>({T, 4}, rng);
        Graph<double> g(false);
        auto z = multiscale_forward(g, m, e);
        CHECK(z->dims == std::vector<long>{T, 4});
        CHECK(z->finite());
    }
}

TEST_CASE("multiscale rejects inputs shorter than the deepest scale") {
    Rng rng(5);
    auto m = build_model<double>(tiny_config(), rng);
    auto e = random_tensor<double>({3, 4}, rng);
    Graph<double> g(false);
    CHECK_THROWS_AS(multiscale_forward(g, m, e), UsageError);
}

// A constant input comes back periodic, not constant: learned transposed-conv
// upsampling has per-phase taps, so the trunk is equivariant only to shifts by
// the full scale factor. The interior repeats with that period.
TEST_CASE("multiscale on a constant sequence is scale-periodic away from edges") {
    Rng rng(6);
    auto m = build_model<double>(tiny_config(), rng);
    const long period = m.cfg.scale_factor();
    auto e = make_tensor<double>({160, 4});
    for (long t = 0; t < 160; ++t)
        for (long c = 0; c < 4; ++c) e->data[t * 4 + c] = 0.3 + 0.1 * c;
    Graph<double> g(false);
    auto z = multiscale_forward(g, m, e);
    const long margin = 48; // beyond the trunk's receptive field
    for (long t = margin; t < 160 - margin - period; ++t)
        for (long c = 0; c < 4; ++c)
            CHECK(z->data[t * 4 + c] ==
                  doctest::Approx(z->data[(t + period) * 4 + c]).epsilon(1e-9));
}

TEST_CASE("multiscale is shift-equivariant in the interior") {
    Rng rng(8);
    auto m = build_model<double>(tiny_config(), rng);
    const long T = 300, shift = 16;
    auto a = random_tensor<double>({T, 4}, rng);
    auto b = make_tensor<double>({T + shift, 4});
    for (auto& v : b->data) v = rng.normal();
    for (long t = 0; t < T; ++t)
        for (long c = 0; c < 4; ++c)
            b->data[(t + shift) * 4 + c] = a->data[t * 4 + c];
    Graph<double> g(false);
    auto za = multiscale_forward(g, m, a);
    auto zb = multiscale_forward(g, m, b);
    const long margin = 100;
    for (long t = margin; t < T - margin; ++t)
        for (long c = 0; c < 4; ++c)
            CHECK(zb->data[(t + shift) * 4 + c] ==
                  doctest::Approx(za->data[t * 4 + c]).epsilon(1e-5));
}

TEST_CASE("saconv output length is floor(T / fps)") {
    Rng rng(9);
    auto cfg = tiny_config();
    cfg.disable_attention = true; // shapes only; keeps long lengths cheap
    auto m = build_model<double>(cfg, rng);
    Rng lens(10);
    for (int rep = 0; rep < 30; ++rep) {
        const long T = cfg.fps + lens.uniform_int(0, 4957);
        auto x = random_tensor<double>({T, 4}, lens, 0.3);
        Graph<double> g(false);
        auto y = saconv_forward(g, m, x);
        CHECK(y->dims == std::vector<long>{T / cfg.fps, 1});
    }
}

TEST_CASE("saconv rejects input shorter than one second") {
    Rng rng(11);
    auto m = build_model<double>(tiny_config(), rng);
    auto x = random_tensor<double>({4, 4}, rng);
    Graph<double> g(false);
    CHECK_THROWS_WITH_AS(saconv_forward(g, m, x),
                         doctest::Contains("at least 5"), UsageError);
}

TEST_CASE("probabilities stay inside (0,1) across random models") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        auto m = build_model<double>(tiny_config(), rng);
        auto x = random_tensor<double>({25, 4}, rng);
        Graph<double> g(false);
        auto y = saconv_forward(g, m, x);
        for (double v : y->data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("saconv block keeps the channel width") {
    Rng rng(14);
    auto m = build_model<double>(tiny_config(), rng);
    auto x = random_tensor<double>({100, 4}, rng);
    Graph<double> g(false);
    auto y = saconv_block(g, m, 0, x);
    CHECK(y->dims == std::vector<long>{100, 4});
}

TEST_CASE("built models match the analytic parameter count") {
    Rng rng(15);
    for (const char* preset : {"small", "paper"}) {
        auto cfg = make_config(preset);
        auto m = build_model<float>(cfg, rng);
        CHECK(m.param_count() == model_param_count(cfg));
    }
    auto t = tiny_config();
    auto m = build_model<double>(t, rng);
    CHECK(m.param_count() == model_param_count(t));
}

TEST_CASE("paper preset lands inside the 5M parameter budget") {
    const long n = model_param_count(make_config("paper"));
    CHECK(n >= 4'000'000);
    CHECK(n <= 6'000'000);
}

TEST_CASE("small preset is desk-scale") {
    const long n = model_param_count(make_config("small"));
    CHECK(n >= 20'000);
    CHECK(n <= 80'000);
}

TEST_CASE("single-scale ablation parameter parity within 10% at every preset") {
    for (const char* preset : {"small", "paper"}) {
        auto cfg = make_config(preset);
        auto ab = cfg;
        ab.single_scale = true;
        const double full = double(model_param_count(cfg));
        const double ablated = double(model_param_count(ab));
        CHECK(std::abs(full - ablated) / full <= 0.10);
    }
}

TEST_CASE("attention ablation has exactly the same parameter count") {
    for (const char* preset : {"small", "paper"}) {
        auto cfg = make_config(preset);
        auto ab = cfg;
        ab.disable_attention = true;
        CHECK(model_param_count(cfg) == model_param_count(ab));
    }
}

TEST_CASE("full pipeline gradient check on the tiny config passes at 1e-5") {
    Rng rng(77);
    auto m = build_model<double>(tiny_config(), rng);
    MelSpectrogram mel;
    mel.n_mels = 16;
    mel.n_frames = 20; // four seconds at fps=5
    mel.fps = 5;
    mel.data.resize(static_cast<size_t>(16 * 20));
    for (auto& v : mel.data) v = static_cast<float>(std::abs(rng.normal()));
    auto target = make_tensor<double>({4, 1});
    target->data = {1.0, 0.0, 1.0, 0.0};
    auto input = features_to_input<double>(mel);

    auto loss_fn = [&](Graph<double>& g) {
        auto y = model_forward(g, m, input);
        return g.mse_loss(y, target);
    };
    // eps 1e-4: a larger step crosses ReLU kinks somewhere in a
    // net this deep, which says nothing about the analytic gradients
    auto report = grad_check(loss_fn, m.params, 3e-5);
    CHECK(report.passed(1e-5));
}

TEST_CASE("gradient check covers both ablation paths") {
    for (int variant = 0; variant < 2; ++variant) {
        auto cfg = tiny_config();
        if (variant == 0)
            cfg.disable_attention = true;
        else
            cfg.single_scale = true;
        Rng rng(78 + variant);
        auto m = build_model<double>(cfg, rng);
        auto x = random_tensor<double>({10, 4}, rng, 0.5);
        auto target = make_tensor<double>({2, 1});
        target->data = {1.0, 0.0};
        auto loss_fn = [&](Graph<double>& g) {
            auto z = multiscale_forward(g, m, g.add(x, x));
            return g.mse_loss(saconv_forward(g, m, z), target);
        };
        // check only the trunk/attention parameters touched by this path
        NamedParams subset;
        for (auto& [name, p] : m.params)
            if (name.rfind("ms.", 0) == 0 || name.rfind("ss.", 0) == 0 ||
                name.rfind("sa0.", 0) == 0)
                subset.emplace_back(name, p);
        REQUIRE(!subset.empty());
        auto report = grad_check(loss_fn, subset, 3e-5);
        CHECK(report.passed(1e-5));
    }
}

TEST_CASE("model config round-trips through text") {
    auto cfg = make_config("paper");
    cfg.disable_attention = true;
    auto back = parse_config(serialize_config(cfg));
    CHECK(serialize_config(back) == serialize_config(cfg));
    CHECK(back.d_x == 256);
    CHECK(back.disable_attention);
}

TEST_CASE("config parsing rejects missing and malformed keys") {
    CHECK_THROWS_AS(parse_config("preset = small\n"), FormatError);
    auto text = serialize_config(make_config("small"));
    auto broken = text;
    broken.replace(broken.find("d_x = 16"), 8, "d_x = ten");
    CHECK_THROWS_AS(parse_config(broken), FormatError);
}

TEST_CASE("checkpoint round-trips parameters bit-exactly") {
    Rng rng(55);
    auto m = build_model<float>(tiny_config(), rng);
    auto path = (tmp_dir() / "tiny.dckp").string();
    save_model(m, path);
    auto back = load_model<float>(path);
    REQUIRE(back.params.size() == m.params.size());
    for (size_t i = 0; i < m.params.size(); ++i) {
        CHECK(back.params[i].first == m.params[i].first);
        CHECK(back.params[i].second->data == m.params[i].second->data);
    }
    CHECK(serialize_config(back.cfg) == serialize_config(m.cfg));
}

TEST_CASE("checkpoint and fresh model agree on predictions") {
    Rng rng(56);
    auto m = build_model<float>(tiny_config(), rng);
    MelSpectrogram mel;
    mel.n_mels = 16;
    mel.n_frames = 25;
    mel.fps = 5;
    mel.data.resize(static_cast<size_t>(16 * 25));
    for (auto& v : mel.data) v = static_cast<float>(std::abs(rng.normal()));
    auto path = (tmp_dir() / "pred.dckp").string();
    save_model(m, path);
    auto back = load_model<float>(path);
    auto a = predict(m, mel);
    auto b = predict(back, mel);
    REQUIRE(a.values.size() == b.values.size());
    for (size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("checkpoint without a config tensor is rejected") {
    auto path = (tmp_dir() / "noconfig.dckp").string();
    io::write_checkpoint(path, {{"stray", {2}, {1.0f, 2.0f}}});
    CHECK_THROWS_AS(load_model<float>(path), FormatError);
}

TEST_CASE("curve CSV round-trips bit-exactly") {
    ProbabilityCurve c;
    Rng rng(57);
    c.values.resize(40);
    for (auto& v : c.values) v = rng.uniform();
    auto path = (tmp_dir() / "curve.csv").string();
    write_curve_csv(c, {}, path);
    auto back = read_curve_csv(path);
    REQUIRE(back.values.size() == c.values.size());
    for (size_t i = 0; i < c.values.size(); ++i) CHECK(back.values[i] == c.values[i]);
}

TEST_CASE("embed_stage exposes trunk and block outputs") {
    Rng rng(58);
    auto m = build_model<float>(tiny_config(), rng);
    MelSpectrogram mel;
    mel.n_mels = 16;
    mel.n_frames = 20;
    mel.fps = 5;
    mel.data.assign(static_cast<size_t>(16 * 20), 0.25f);
    auto z0 = embed_stage(m, mel, 0);
    auto z1 = embed_stage(m, mel, 1);
    CHECK(z0->dims == std::vector<long>{20, 4});
    CHECK(z1->dims == std::vector<long>{20, 4});
    CHECK_THROWS_AS(embed_stage(m, mel, 2), UsageError);
}
