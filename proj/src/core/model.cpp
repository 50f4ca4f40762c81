#include "model.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace chorus {

long ModelConfig::scale_factor() const {
    long f = 1;
    for (long b = 1; b < n_branches; ++b) f *= branch_stride;
    return f;
}

void ModelConfig::validate() const {
    if (n_mels < 1 || n_mels % (freq_pool * freq_pool) != 0)
        throw UsageError("config: n_mels must be a positive multiple of freq_pool^2");
    for (long v : {stem_c1, stem_c2, stem_out, n_branches, branch_width,
                   fusion_rounds, d_x, n_blocks, d_s, down_channels, head_channels,
                   fps})
        if (v < 1) throw UsageError("config: counts and widths must be positive");
    if (branch_stride < 2) throw UsageError("config: branch_stride must be >= 2");
}

ModelConfig make_config(const std::string& preset) {
    ModelConfig c;
    c.preset = preset;
    if (preset == "small") {
        // defaults in the struct
    } else if (preset == "paper") {
        c.stem_c1 = 32;
        c.stem_c2 = 64;
        c.stem_out = 128;
        c.n_branches = 3;
        c.branch_width = 128;
        c.fusion_rounds = 2;
        c.d_x = 256;
        c.n_blocks = 3;
        c.d_s = 256;
        c.down_channels = 128;
        c.head_channels = 64;
    } else {
        throw UsageError("unknown preset '" + preset + "' (expected paper or small)");
    }
    return c;
}

std::string serialize_config(const ModelConfig& c) {
    std::map<std::string, std::string> kv;
    kv["preset"] = c.preset;
    kv["n_mels"] = std::to_string(c.n_mels);
    kv["stem_c1"] = std::to_string(c.stem_c1);
    kv["stem_c2"] = std::to_string(c.stem_c2);
    kv["stem_out"] = std::to_string(c.stem_out);
    kv["freq_pool"] = std::to_string(c.freq_pool);
    kv["n_branches"] = std::to_string(c.n_branches);
    kv["branch_width"] = std::to_string(c.branch_width);
    kv["branch_stride"] = std::to_string(c.branch_stride);
    kv["fusion_rounds"] = std::to_string(c.fusion_rounds);
    kv["d_x"] = std::to_string(c.d_x);
    kv["single_scale"] = c.single_scale ? "true" : "false";
    kv["n_blocks"] = std::to_string(c.n_blocks);
    kv["d_s"] = std::to_string(c.d_s);
    kv["down_channels"] = std::to_string(c.down_channels);
    kv["head_channels"] = std::to_string(c.head_channels);
    kv["fps"] = std::to_string(c.fps);
    kv["disable_attention"] = c.disable_attention ? "true" : "false";
    return io::serialize_kv(kv);
}

ModelConfig parse_config(const std::string& text) {
    auto kv = io::parse_kv(text);
    ModelConfig c;
    auto get_long = [&](const char* key, long& field) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("config: missing key ") + key);
        try {
            field = std::stol(it->second);
        } catch (const std::exception&) {
            throw FormatError(std::string("config: non-integer value for ") + key);
        }
    };
    auto get_bool = [&](const char* key, bool& field) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError(std::string("config: missing key ") + key);
        if (it->second != "true" && it->second != "false")
            throw FormatError(std::string("config: expected true/false for ") + key);
        field = it->second == "true";
    };
    auto it = kv.find("preset");
    if (it == kv.end()) throw FormatError("config: missing key preset");
    c.preset = it->second;
    get_long("n_mels", c.n_mels);
    get_long("stem_c1", c.stem_c1);
    get_long("stem_c2", c.stem_c2);
    get_long("stem_out", c.stem_out);
    get_long("freq_pool", c.freq_pool);
    get_long("n_branches", c.n_branches);
    get_long("branch_width", c.branch_width);
    get_long("branch_stride", c.branch_stride);
    get_long("fusion_rounds", c.fusion_rounds);
    get_long("d_x", c.d_x);
    get_bool("single_scale", c.single_scale);
    get_long("n_blocks", c.n_blocks);
    get_long("d_s", c.d_s);
    get_long("down_channels", c.down_channels);
    get_long("head_channels", c.head_channels);
    get_long("fps", c.fps);
    get_bool("disable_attention", c.disable_attention);
    c.validate();
    return c;
}

namespace {

long conv1d_params(long K, long cin, long cout, bool bias = true) {
    return K * cin * cout + (bias ? cout : 0);
}

} // namespace

long multiscale_trunk_params(const ModelConfig& c) {
    const long w = c.branch_width;
    long n = conv1d_params(3, c.stem_out, w);
    for (long b = 1; b < c.n_branches; ++b)
        n += conv1d_params(c.branch_stride, w, w);
    long round = 0;
    round += c.n_branches * conv1d_params(3, w, w);
    for (long i = 0; i < c.n_branches; ++i) {
        for (long j = 0; j < c.n_branches; ++j)
            if (i != j) round += std::abs(i - j) * conv1d_params(c.branch_stride, w, w);
        round += conv1d_params(1, c.n_branches * w, w);
    }
    n += c.fusion_rounds * round;
    for (long b = 1; b < c.n_branches; ++b)
        n += b * conv1d_params(c.branch_stride, w, w);
    n += conv1d_params(1, c.n_branches * w, c.d_x);
    return n;
}

long single_scale_depth(const ModelConfig& c) {
    const long w = c.branch_width;
    const long target = multiscale_trunk_params(c);
    const long fixed = conv1d_params(3, c.stem_out, w) + conv1d_params(1, w, c.d_x);
    const long per = conv1d_params(3, w, w);
    const long depth = (target - fixed + per / 2) / per;
    return std::max<long>(0, depth);
}

long model_param_count(const ModelConfig& c) {
    long n = 0;
    n += 9 * 1 * c.stem_c1 + c.stem_c1;
    n += 9 * c.stem_c1 * c.stem_c2 + c.stem_c2;
    const long folded = (c.n_mels / (c.freq_pool * c.freq_pool)) * c.stem_c2;
    n += conv1d_params(1, folded, c.stem_out);
    if (c.single_scale) {
        const long w = c.branch_width;
        n += conv1d_params(3, c.stem_out, w);
        n += single_scale_depth(c) * conv1d_params(3, w, w);
        n += conv1d_params(1, w, c.d_x);
    } else {
        n += multiscale_trunk_params(c);
    }
    // the attention projections and their conv replacement are both 3*d_x*d_s
    n += c.n_blocks * (3 * c.d_x * c.d_s + conv1d_params(3, c.d_x + c.d_s, c.d_x));
    n += conv1d_params(c.fps, c.d_x, c.down_channels);
    n += conv1d_params(3, c.down_channels, c.head_channels);
    n += conv1d_params(1, c.head_channels, 1);
    return n;
}

void write_curve_csv(const ProbabilityCurve& curve, const std::vector<uint8_t>& binary,
                     const std::string& path) {
    if (!binary.empty() && binary.size() != curve.values.size())
        throw UsageError("write_curve_csv: binary column length mismatch");
    std::ostringstream os;
    os << "second,probability,binary\n";
    char buf[64];
    for (size_t i = 0; i < curve.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%d\n", i, curve.values[i],
                      binary.empty() ? 0 : int(binary[i]));
        os << buf;
    }
    io::write_text_file(path, os.str());
}

ProbabilityCurve read_curve_csv(const std::string& path) {
    std::istringstream is(io::read_text_file(path));
    std::string line;
    if (!std::getline(is, line) || line.rfind("second,probability", 0) != 0)
        throw FormatError(path + ": expected curve CSV header");
    ProbabilityCurve c;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = io::split(line, ',');
        if (f.size() != 3)
            throw FormatError(path + ": line " + std::to_string(line_no) +
                              ": expected 3 columns");
        try {
            c.values.push_back(std::stod(f[1]));
        } catch (const std::exception&) {
            throw FormatError(path + ": line " + std::to_string(line_no) +
                              ": bad probability value");
        }
    }
    return c;
}

} // namespace chorus
