#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "features.hpp"
#include "graph.hpp"
#include "io.hpp"

namespace chorus {

// One flat config covers the stem, the multi-scale trunk and the SA-Conv
// head; presets fill it, checkpoints embed it verbatim.
struct ModelConfig {
    std::string preset = "small";
    long n_mels = 128;
    // stem: two 3x3 conv layers with 4x1 frequency pooling, then a 1x1
    // projection of the folded frequency axis
    long stem_c1 = 4;
    long stem_c2 = 8;
    long stem_out = 16;
    long freq_pool = 4;
    // multi-scale trunk
    long n_branches = 2;
    long branch_width = 16;
    long branch_stride = 4;
    long fusion_rounds = 1;
    long d_x = 16;
    bool single_scale = false; // replace branches by an equal-parameter stack
    // SA-Conv head
    long n_blocks = 1;
    long d_s = 16;
    long down_channels = 48;
    long head_channels = 16;
    long fps = 43;
    bool disable_attention = false; // replace attention by an equal-parameter conv

    long scale_factor() const; // branch_stride^(n_branches-1)
    void validate() const;
};

ModelConfig make_config(const std::string& preset);
std::string serialize_config(const ModelConfig& cfg);
ModelConfig parse_config(const std::string& text);

// Parameter counts used for the ablation-parity contract.
long multiscale_trunk_params(const ModelConfig& cfg);
long single_scale_depth(const ModelConfig& cfg);
long model_param_count(const ModelConfig& cfg);

struct ProbabilityCurve {
    std::vector<double> values; // one per whole second, in [0,1]
    std::string song_id;
};

void write_curve_csv(const ProbabilityCurve& curve, const std::vector<uint8_t>& binary,
                     const std::string& path);
ProbabilityCurve read_curve_csv(const std::string& path);

template <class S>
struct Model {
    ModelConfig cfg;
    std::vector<std::pair<std::string, TensorPtr<S>>> params;

    TensorPtr<S> param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        throw UsageError("model: no parameter named " + name);
    }
    long param_count() const {
        long n = 0;
        for (const auto& [name, t] : params) n += t->size();
        return n;
    }
};

namespace modeldetail {

template <class S>
void add_param(Model<S>& m, const std::string& name, std::vector<long> dims,
               Rng& rng, double stddev) {
    auto t = make_tensor<S>(std::move(dims), true);
    for (auto& v : t->data) v = static_cast<S>(stddev * rng.normal());
    m.params.emplace_back(name, std::move(t));
}

template <class S>
void add_conv1d(Model<S>& m, const std::string& name, long K, long cin, long cout,
                Rng& rng, bool bias = true) {
    add_param(m, name + ".w", {K, cin, cout}, rng, std::sqrt(2.0 / (K * cin)));
    // small nonzero bias init keeps ReLU pre-activations off the exact kink
    if (bias) add_param(m, name + ".b", {cout}, rng, 0.01);
}

template <class S>
void add_conv2d(Model<S>& m, const std::string& name, long cin, long cout, Rng& rng) {
    add_param(m, name + ".w", {3, 3, cin, cout}, rng, std::sqrt(2.0 / (9 * cin)));
    add_param(m, name + ".b", {cout}, rng, 0.01);
}

// Per-branch rescaling step names: scale j -> scale i needs |i-j| convs.
inline std::string rescale_name(const std::string& prefix, long i, long j, long step) {
    return prefix + ".to" + std::to_string(i) + "from" + std::to_string(j) + ".s" +
           std::to_string(step);
}

} // namespace modeldetail

template <class S>
Model<S> build_model(const ModelConfig& cfg, Rng& rng) {
    using namespace modeldetail;
    cfg.validate();
    Model<S> m;
    m.cfg = cfg;

    add_conv2d(m, "stem.c1", 1, cfg.stem_c1, rng);
    add_conv2d(m, "stem.c2", cfg.stem_c1, cfg.stem_c2, rng);
    const long folded = (cfg.n_mels / (cfg.freq_pool * cfg.freq_pool)) * cfg.stem_c2;
    add_conv1d(m, "stem.proj", 1, folded, cfg.stem_out, rng);

    const long w = cfg.branch_width;
    if (cfg.single_scale) {
        const long depth = single_scale_depth(cfg);
        add_conv1d(m, "ss.in", 3, cfg.stem_out, w, rng);
        for (long d = 0; d < depth; ++d)
            add_conv1d(m, "ss.mid" + std::to_string(d), 3, w, w, rng);
        add_conv1d(m, "ss.out", 1, w, cfg.d_x, rng);
    } else {
        add_conv1d(m, "ms.entry0", 3, cfg.stem_out, w, rng);
        for (long b = 1; b < cfg.n_branches; ++b)
            add_conv1d(m, "ms.entry" + std::to_string(b), cfg.branch_stride, w, w, rng);
        for (long r = 0; r < cfg.fusion_rounds; ++r) {
            const std::string pr = "ms.r" + std::to_string(r);
            for (long b = 0; b < cfg.n_branches; ++b)
                add_conv1d(m, pr + ".conv" + std::to_string(b), 3, w, w, rng);
            for (long i = 0; i < cfg.n_branches; ++i) {
                for (long j = 0; j < cfg.n_branches; ++j) {
                    if (i == j) continue;
                    for (long s = 0; s < std::abs(i - j); ++s)
                        add_conv1d(m, rescale_name(pr, i, j, s), cfg.branch_stride,
                                   w, w, rng);
                }
                add_conv1d(m, pr + ".mix" + std::to_string(i), 1,
                           cfg.n_branches * w, w, rng);
            }
        }
        for (long b = 1; b < cfg.n_branches; ++b)
            for (long s = 0; s < b; ++s)
                add_conv1d(m, "ms.up" + std::to_string(b) + ".s" + std::to_string(s),
                           cfg.branch_stride, w, w, rng);
        add_conv1d(m, "ms.out", 1, cfg.n_branches * w, cfg.d_x, rng);
    }

    for (long i = 0; i < cfg.n_blocks; ++i) {
        const std::string pr = "sa" + std::to_string(i);
        if (cfg.disable_attention) {
            // same 3*d_x*d_s parameters as the three attention projections
            add_param(m, pr + ".attn.w", {3, cfg.d_x, cfg.d_s}, rng,
                      std::sqrt(2.0 / (3 * cfg.d_x)));
        } else {
            const double s = std::sqrt(1.0 / cfg.d_x);
            add_param(m, pr + ".wq", {cfg.d_x, cfg.d_s}, rng, s);
            add_param(m, pr + ".wk", {cfg.d_x, cfg.d_s}, rng, s);
            add_param(m, pr + ".wv", {cfg.d_x, cfg.d_s}, rng, s);
        }
        add_conv1d(m, pr + ".conv", 3, cfg.d_x + cfg.d_s, cfg.d_x, rng);
    }
    add_conv1d(m, "down", cfg.fps, cfg.d_x, cfg.down_channels, rng);
    add_conv1d(m, "head1", 3, cfg.down_channels, cfg.head_channels, rng);
    add_conv1d(m, "head2", 1, cfg.head_channels, 1, rng);
    return m;
}

// Mel features as a (F, T, 1) plane for the 2-D stem.
template <class S>
TensorPtr<S> features_to_input(const MelSpectrogram& m) {
    auto x = make_tensor<S>({m.n_mels, m.n_frames, 1});
    for (long t = 0; t < m.n_frames; ++t)
        for (long f = 0; f < m.n_mels; ++f)
            x->data[static_cast<size_t>(f * m.n_frames + t)] =
                static_cast<S>(m.at(t, f));
    return x;
}

template <class S>
TensorPtr<S> stem_forward(Graph<S>& g, const Model<S>& m, const TensorPtr<S>& spec) {
    const auto& cfg = m.cfg;
    if (spec->rank() != 3 || spec->dim(0) != cfg.n_mels || spec->dim(2) != 1)
        throw DimensionError("stem: expected (" + std::to_string(cfg.n_mels) +
                             ", T, 1) input, got " + spec->shape_str());
    auto h = g.relu(g.conv2d(spec, m.param("stem.c1.w"), m.param("stem.c1.b")));
    h = g.avg_pool_freq(h, cfg.freq_pool);
    h = g.relu(g.conv2d(h, m.param("stem.c2.w"), m.param("stem.c2.b")));
    h = g.avg_pool_freq(h, cfg.freq_pool);
    auto seq = g.freq_to_channels(h); // (T, folded)
    return g.relu(g.conv1d(seq, m.param("stem.proj.w"), m.param("stem.proj.b"), 1,
                           Pad::Same));
}

template <class S>
TensorPtr<S> multiscale_forward(Graph<S>& g, const Model<S>& m, const TensorPtr<S>& e) {
    using modeldetail::rescale_name;
    const auto& cfg = m.cfg;
    if (e->rank() != 2 || e->dim(1) != cfg.stem_out)
        throw DimensionError("multiscale: expected (T, " +
                             std::to_string(cfg.stem_out) + ") input, got " +
                             e->shape_str());
    const long T = e->dim(0);
    const long factor = cfg.scale_factor();
    if (T < factor)
        throw UsageError("multiscale: need at least " + std::to_string(factor) +
                         " frames, got " + std::to_string(T));

    auto conv = [&](const TensorPtr<S>& x, const std::string& name, long stride,
                    Pad pad) {
        return g.relu(g.conv1d(x, m.param(name + ".w"), m.param(name + ".b"),
                               stride, pad));
    };

    if (cfg.single_scale) {
        auto h = conv(e, "ss.in", 1, Pad::Same);
        for (long d = 0; d < single_scale_depth(cfg); ++d)
            h = conv(h, "ss.mid" + std::to_string(d), 1, Pad::Same);
        return conv(h, "ss.out", 1, Pad::Same);
    }

    const long Tt = (T / factor) * factor;
    auto x = Tt == T ? e : g.slice_time(e, 0, Tt);

    std::vector<TensorPtr<S>> br(static_cast<size_t>(cfg.n_branches));
    br[0] = conv(x, "ms.entry0", 1, Pad::Same);
    for (long b = 1; b < cfg.n_branches; ++b)
        br[b] = conv(br[b - 1], "ms.entry" + std::to_string(b), cfg.branch_stride,
                     Pad::Valid);

    auto up_once = [&](const TensorPtr<S>& h, const std::string& name) {
        return g.relu(g.tconv1d(h, m.param(name + ".w"), m.param(name + ".b")));
    };

    for (long r = 0; r < cfg.fusion_rounds; ++r) {
        const std::string pr = "ms.r" + std::to_string(r);
        std::vector<TensorPtr<S>> h(br.size());
        for (long b = 0; b < cfg.n_branches; ++b)
            h[b] = conv(br[b], pr + ".conv" + std::to_string(b), 1, Pad::Same);
        for (long i = 0; i < cfg.n_branches; ++i) {
            std::vector<TensorPtr<S>> parts{h[i]};
            for (long j = 0; j < cfg.n_branches; ++j) {
                if (i == j) continue;
                auto r_ji = h[j];
                for (long s = 0; s < std::abs(i - j); ++s) {
                    const auto name = rescale_name(pr, i, j, s);
                    r_ji = j < i ? conv(r_ji, name, cfg.branch_stride, Pad::Valid)
                                 : up_once(r_ji, name);
                }
                parts.push_back(r_ji);
            }
            br[i] = conv(g.concat_channels(parts), pr + ".mix" + std::to_string(i),
                         1, Pad::Same);
        }
    }

    std::vector<TensorPtr<S>> full{br[0]};
    for (long b = 1; b < cfg.n_branches; ++b) {
        auto h = br[b];
        for (long s = 0; s < b; ++s)
            h = up_once(h, "ms.up" + std::to_string(b) + ".s" + std::to_string(s));
        full.push_back(h);
    }
    auto out = conv(g.concat_channels(full), "ms.out", 1, Pad::Same);
    return g.pad_replicate_time(out, T - Tt);
}

template <class S>
TensorPtr<S> self_attention(Graph<S>& g, const TensorPtr<S>& x,
                            const TensorPtr<S>& wq, const TensorPtr<S>& wk,
                            const TensorPtr<S>& wv) {
    const long d_s = wq->dim(1);
    // scaling Q up front instead of the T x T score matrix saves a full
    // T^2 pass; the scores are identical
    auto q = g.scale(g.matmul(x, wq), 1.0 / std::sqrt(double(d_s)));
    auto k = g.matmul(x, wk);
    auto v = g.matmul(x, wv);
    auto weights = g.softmax(g.matmul(q, g.transpose(k)), 1);
    return g.matmul(weights, v);
}

template <class S>
TensorPtr<S> saconv_block(Graph<S>& g, const Model<S>& m, long block,
                          const TensorPtr<S>& x) {
    const auto& cfg = m.cfg;
    const std::string pr = "sa" + std::to_string(block);
    TensorPtr<S> s;
    if (cfg.disable_attention) {
        s = g.conv1d(x, m.param(pr + ".attn.w"), nullptr, 1, Pad::Same);
    } else {
        s = self_attention(g, x, m.param(pr + ".wq"), m.param(pr + ".wk"),
                           m.param(pr + ".wv"));
    }
    auto h = g.concat_channels({x, s});
    return g.relu(g.conv1d(h, m.param(pr + ".conv.w"), m.param(pr + ".conv.b"), 1,
                           Pad::Same));
}

// (T, d_x) -> (floor(T/fps), 1) probabilities.
template <class S>
TensorPtr<S> saconv_forward(Graph<S>& g, const Model<S>& m, TensorPtr<S> x) {
    const auto& cfg = m.cfg;
    if (x->dim(0) < cfg.fps)
        throw UsageError("saconv: need at least " + std::to_string(cfg.fps) +
                         " frames for one second, got " + std::to_string(x->dim(0)));
    for (long i = 0; i < cfg.n_blocks; ++i) x = saconv_block(g, m, i, x);
    auto y = g.relu(g.conv1d(x, m.param("down.w"), m.param("down.b"), cfg.fps,
                             Pad::Valid));
    y = g.relu(g.conv1d(y, m.param("head1.w"), m.param("head1.b"), 1, Pad::Same));
    y = g.conv1d(y, m.param("head2.w"), m.param("head2.b"), 1, Pad::Same);
    return g.sigmoid(y);
}

template <class S>
TensorPtr<S> model_forward(Graph<S>& g, const Model<S>& m, const TensorPtr<S>& spec) {
    auto e = stem_forward(g, m, spec);
    auto z = multiscale_forward(g, m, e);
    return saconv_forward(g, m, z);
}

// Inference convenience: full-song forward without recording.
template <class S>
ProbabilityCurve predict(const Model<S>& m, const MelSpectrogram& mel) {
    Graph<S> g(false);
    auto out = model_forward(g, m, features_to_input<S>(mel));
    ProbabilityCurve c;
    c.values.resize(static_cast<size_t>(out->dim(0)));
    for (long i = 0; i < out->dim(0); ++i)
        c.values[static_cast<size_t>(i)] = static_cast<double>(out->data[i]);
    return c;
}

// Embedding after the multi-scale trunk or after SA-Conv block `stage`
// (stage 0 = trunk output, k >= 1 = after block k). Used for SSM export.
template <class S>
TensorPtr<S> embed_stage(const Model<S>& m, const MelSpectrogram& mel, long stage) {
    if (stage < 0 || stage > m.cfg.n_blocks)
        throw UsageError("embed_stage: stage out of range");
    Graph<S> g(false);
    auto z = multiscale_forward(g, m, stem_forward(g, m, features_to_input<S>(mel)));
    for (long i = 0; i < stage; ++i) z = saconv_block(g, m, i, z);
    return z;
}

// ---- checkpoints ----

constexpr const char* kConfigTensorName = "meta.config";

template <class S>
void save_model(const Model<S>& m, const std::string& path) {
    std::vector<io::NamedTensor> out;
    const std::string cfg_text = serialize_config(m.cfg);
    io::NamedTensor meta;
    meta.name = kConfigTensorName;
    meta.dims = {static_cast<long>(cfg_text.size())};
    meta.data.reserve(cfg_text.size());
    for (char c : cfg_text) meta.data.push_back(static_cast<float>(c));
    out.push_back(std::move(meta));
    for (const auto& [name, t] : m.params) {
        io::NamedTensor nt;
        nt.name = name;
        nt.dims = t->dims;
        nt.data.reserve(t->data.size());
        for (auto v : t->data) nt.data.push_back(static_cast<float>(v));
        out.push_back(std::move(nt));
    }
    io::write_checkpoint(path, out);
}

template <class S>
Model<S> load_model(const std::string& path) {
    auto tensors = io::read_checkpoint(path);
    const io::NamedTensor* meta = nullptr;
    for (const auto& t : tensors)
        if (t.name == kConfigTensorName) meta = &t;
    if (!meta) throw FormatError(path + ": checkpoint has no embedded config");
    std::string cfg_text;
    for (float v : meta->data) cfg_text.push_back(static_cast<char>(v));
    Rng rng(0);
    auto m = build_model<S>(parse_config(cfg_text), rng);
    for (auto& [name, param] : m.params) {
        const io::NamedTensor* src = nullptr;
        for (const auto& t : tensors)
            if (t.name == name) src = &t;
        if (!src) throw FormatError(path + ": missing tensor " + name);
        if (src->dims != param->dims)
            throw FormatError(path + ": tensor " + name + " has wrong shape");
        for (size_t i = 0; i < param->data.size(); ++i)
            param->data[i] = static_cast<S>(src->data[i]);
    }
    if (tensors.size() != m.params.size() + 1)
        throw FormatError(path + ": checkpoint holds unexpected extra tensors");
    return m;
}

} // namespace chorus
