#include "chorus_kit.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/features.hpp"
#include "core/metrics.hpp"
#include "core/model.hpp"
#include "core/plot.hpp"
#include "core/postprocess.hpp"
#include "core/trainer.hpp"

using namespace chorus;

struct ck_model {
    Model<float> model;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return CK_OK;
    } catch (const Error& e) {
        g_last_error = e.what();
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return CK_EFORMAT;
    }
}

void require_arg(const void* p, const char* name) {
    if (!p) throw UsageError(std::string(name) + " must not be NULL");
}

SmoothKind smooth_from(int kind) {
    if (kind == CK_SMOOTH_MEDIAN) return SmoothKind::Median;
    if (kind == CK_SMOOTH_TRIMMED_MEAN) return SmoothKind::TrimmedMean;
    throw UsageError("unknown smooth kind " + std::to_string(kind));
}

ThresholdKind threshold_from(int kind) {
    if (kind == CK_THRESHOLD_LITERAL) return ThresholdKind::Literal;
    if (kind == CK_THRESHOLD_MIDPOINT) return ThresholdKind::Midpoint;
    throw UsageError("unknown threshold kind " + std::to_string(kind));
}

} // namespace

extern "C" {

const char* ck_version(void) { return "chorus-kit 1.0.0 (formats DCF1, DCKP)"; }

const char* ck_last_error(void) { return g_last_error.c_str(); }

int ck_extract_features(const char* wav_path, const char* dcf_path, int log_compress) {
    return guarded([&] {
        require_arg(wav_path, "wav_path");
        require_arg(dcf_path, "dcf_path");
        auto clip = load_wav(wav_path);
        if (clip.sample_rate != kSampleRate) clip = resample(clip, kSampleRate);
        auto m = mel_spectrogram(clip);
        if (log_compress) apply_log_compression(m);
        write_features(m, dcf_path);
    });
}

int ck_synth_corpus(const char* out_dir, long n_songs, uint64_t seed) {
    return guarded([&] {
        require_arg(out_dir, "out_dir");
        synth_corpus(out_dir, n_songs, seed);
    });
}

void ck_train_options_init(ck_train_options* opts) {
    if (!opts) return;
    opts->batch_size = 4;
    opts->crop_frames = 3096;
    opts->lr = 1e-4;
    opts->validate_every = 50;
    opts->patience = 500;
    opts->max_iterations = 20000;
    opts->seed = 7;
    opts->preset = "small";
    opts->single_scale = 0;
    opts->no_attention = 0;
}

int ck_train(const char* manifest_path, const ck_train_options* opts,
             const char* out_dir, double* best_val_f1) {
    return guarded([&] {
        require_arg(manifest_path, "manifest_path");
        require_arg(opts, "opts");
        require_arg(out_dir, "out_dir");
        require_arg(opts->preset, "opts->preset");
        TrainConfig cfg;
        cfg.batch_size = opts->batch_size;
        cfg.crop_frames = opts->crop_frames;
        cfg.lr = opts->lr;
        cfg.validate_every = opts->validate_every;
        cfg.patience = opts->patience;
        cfg.max_iterations = opts->max_iterations;
        cfg.seed = opts->seed;
        cfg.preset = opts->preset;
        cfg.single_scale = opts->single_scale != 0;
        cfg.disable_attention = opts->no_attention != 0;
        auto res = fit(cfg, manifest_path, out_dir);
        if (best_val_f1) *best_val_f1 = res.best_val_f1;
    });
}

int ck_model_open(const char* checkpoint_path, ck_model** out) {
    return guarded([&] {
        require_arg(checkpoint_path, "checkpoint_path");
        require_arg(out, "out");
        *out = new ck_model{load_model<float>(checkpoint_path)};
    });
}

void ck_model_close(ck_model* model) { delete model; }

long ck_model_param_count(const ck_model* model) {
    return model ? model->model.param_count() : 0;
}

const char* ck_model_preset(const ck_model* model) {
    return model ? model->model.cfg.preset.c_str() : "";
}

int ck_model_detect(const ck_model* model, const char* dcf_path,
                    const char* curve_csv_path, int smooth_kind, int threshold_kind,
                    long* segments, long max_segments, long* n_segments) {
    return guarded([&] {
        require_arg(model, "model");
        require_arg(dcf_path, "dcf_path");
        require_arg(curve_csv_path, "curve_csv_path");
        const auto smooth = smooth_from(smooth_kind);
        const auto threshold = threshold_from(threshold_kind);
        auto mel = read_features(dcf_path);
        auto curve = predict(model->model, mel);
        auto mask = postprocess_curve(curve.values, smooth, threshold);
        write_curve_csv(curve, mask.values, curve_csv_path);
        auto spans = segments_from_mask(mask);
        if (n_segments) *n_segments = static_cast<long>(spans.size());
        if (segments) {
            const long n = std::min<long>(max_segments, static_cast<long>(spans.size()));
            for (long i = 0; i < n; ++i) {
                segments[2 * i] = spans[static_cast<size_t>(i)].start;
                segments[2 * i + 1] = spans[static_cast<size_t>(i)].end;
            }
        }
    });
}

int ck_model_eval(const ck_model* model, const char* manifest_path,
                  const char* split, const char* report_path, double* mean_f1,
                  double* mean_auc) {
    return guarded([&] {
        require_arg(model, "model");
        require_arg(manifest_path, "manifest_path");
        require_arg(split, "split");
        require_arg(report_path, "report_path");
        std::vector<SongEval> songs;
        for (const auto& entry : read_manifest(manifest_path)) {
            if (entry.split != split) continue;
            auto ex = load_example(entry);
            if (ex.features.n_frames < model->model.cfg.fps) continue;
            auto curve = predict(model->model, ex.features);
            auto mask = postprocess_curve(curve.values);
            auto truth = ex.targets;
            truth.resize(mask.values.size(), 0);
            songs.push_back({ex.song_id, prf(mask.values, truth),
                             auc(curve.values, truth)});
        }
        if (songs.empty())
            throw UsageError(std::string(manifest_path) + ": no scoreable songs in split '" +
                             split + "'");
        auto report = summarize(std::move(songs));
        write_report(report, report_path);
        if (mean_f1) *mean_f1 = report.mean_f1;
        if (mean_auc)
            *mean_auc = report.auc_defined ? report.mean_auc
                                           : std::numeric_limits<double>::quiet_NaN();
    });
}

int ck_model_ssm(const ck_model* model, const char* dcf_path, long stage,
                 int distance, const char* csv_path) {
    return guarded([&] {
        require_arg(model, "model");
        require_arg(dcf_path, "dcf_path");
        require_arg(csv_path, "csv_path");
        Distance d;
        if (distance == CK_DISTANCE_EUCLIDEAN) d = Distance::Euclidean;
        else if (distance == CK_DISTANCE_COSINE) d = Distance::Cosine;
        else throw UsageError("unknown distance " + std::to_string(distance));
        auto mel = read_features(dcf_path);
        auto e = embed_stage(model->model, mel, stage);
        auto m = ssm(e, d);
        write_ssm_csv(m, e->dim(0), csv_path);
    });
}

int ck_plot_curve(const char* curve_csv_path, const char* annotation_tsv,
                  const char* svg_path) {
    return guarded([&] {
        require_arg(curve_csv_path, "curve_csv_path");
        require_arg(svg_path, "svg_path");
        auto curve = read_curve_csv(curve_csv_path);
        PlotInput in;
        in.values = curve.values;
        auto smoothed = median_smooth(curve.values);
        auto mask = binarize(smoothed, adaptive_threshold(smoothed));
        in.threshold = mask.threshold_used;
        if (annotation_tsv) in.truth = parse_annotation(annotation_tsv).chorus_segments();
        plot_curve_svg(in, svg_path);
    });
}

} // extern "C"
