// chorus-kit: command-line front end over the chorus_kit C library.
#include <cstdint>
#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "chorus_kit.h"

namespace {

int finish(int rc) {
    if (rc != CK_OK) std::fprintf(stderr, "chorus-kit: %s\n", ck_last_error());
    return rc;
}

struct ModelGuard {
    ck_model* m = nullptr;
    ~ModelGuard() { ck_model_close(m); }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chorus detection toolkit"};
    app.set_version_flag("--version", ck_version());
    app.require_subcommand(1);

    // features
    auto* features = app.add_subcommand("features", "Extract Mel features from a WAV file");
    std::string f_in, f_out;
    bool f_log = false;
    features->add_option("--in", f_in, "input WAV")->required();
    features->add_option("--out", f_out, "output .dcf feature file")->required();
    features->add_flag("--log", f_log, "apply log(1+m) compression");
    long f_jobs = 1;
    features->add_option("--jobs", f_jobs, "parallelism hint")->check(CLI::PositiveNumber);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
    std::string s_out;
    long s_songs = 200;
    std::uint64_t s_seed = 7;
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--songs", s_songs, "number of songs")->check(CLI::PositiveNumber);
    synth->add_option("--seed", s_seed, "random seed");

    // train
    auto* train = app.add_subcommand("train", "Train a model on a corpus manifest");
    std::string t_manifest, t_out, t_preset = "small";
    ck_train_options topts;
    ck_train_options_init(&topts);
    train->add_option("--manifest", t_manifest, "manifest.tsv")->required();
    train->add_option("--out", t_out, "run directory")->required();
    train->add_option("--preset", t_preset, "model preset")
        ->check(CLI::IsMember({"small", "paper"}));
    train->add_option("--seed", topts.seed, "random seed");
    train->add_option("--batch-size", topts.batch_size)->check(CLI::PositiveNumber);
    train->add_option("--crop-frames", topts.crop_frames)->check(CLI::PositiveNumber);
    train->add_option("--lr", topts.lr, "learning rate");
    train->add_option("--validate-every", topts.validate_every)->check(CLI::PositiveNumber);
    train->add_option("--patience", topts.patience)->check(CLI::PositiveNumber);
    train->add_option("--max-iterations", topts.max_iterations)->check(CLI::PositiveNumber);
    train->add_flag("--single-scale", topts.single_scale,
                    "ablation: stacked convs instead of scale branches");
    train->add_flag("--no-attention", topts.no_attention,
                    "ablation: plain conv instead of self-attention");

    // detect
    auto* detect = app.add_subcommand("detect", "Run chorus detection on a feature file");
    std::string d_model, d_in, d_out, d_smooth = "median", d_threshold = "literal";
    detect->add_option("--model", d_model, "checkpoint (.dckp)")->required();
    detect->add_option("--in", d_in, "input .dcf feature file")->required();
    detect->add_option("--out", d_out, "output curve CSV")->required();
    detect->add_option("--smooth", d_smooth, "smoothing statistic")
        ->check(CLI::IsMember({"median", "trimmed-mean"}));
    detect->add_option("--threshold", d_threshold, "threshold rule")
        ->check(CLI::IsMember({"literal", "midpoint"}));

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a manifest split");
    std::string e_model, e_manifest, e_split = "test", e_out;
    long e_jobs = 1;
    eval->add_option("--model", e_model, "checkpoint (.dckp)")->required();
    eval->add_option("--manifest", e_manifest, "manifest.tsv")->required();
    eval->add_option("--split", e_split, "split to score")
        ->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--out", e_out, "output report.tsv")->required();
    eval->add_option("--jobs", e_jobs, "parallelism hint")->check(CLI::PositiveNumber);

    // ssm
    auto* ssm = app.add_subcommand("ssm", "Export a self-similarity matrix");
    std::string m_model, m_in, m_stage = "multiscale", m_distance = "cosine", m_out;
    ssm->add_option("--model", m_model, "checkpoint (.dckp)")->required();
    ssm->add_option("--in", m_in, "input .dcf feature file")->required();
    ssm->add_option("--stage", m_stage, "embedding stage")
        ->check(CLI::IsMember({"multiscale", "block1", "block2", "block3"}));
    ssm->add_option("--distance", m_distance, "distance function")
        ->check(CLI::IsMember({"euclidean", "cosine"}));
    ssm->add_option("--out", m_out, "output CSV")->required();

    // plot
    auto* plot = app.add_subcommand("plot", "Render a detection curve as SVG");
    std::string p_in, p_annotation, p_out;
    plot->add_option("--in", p_in, "curve CSV from detect")->required();
    plot->add_option("--annotation", p_annotation, "ground-truth TSV to shade");
    plot->add_option("--out", p_out, "output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return CK_EUSAGE;
    }

    if (features->parsed())
        return finish(ck_extract_features(f_in.c_str(), f_out.c_str(), f_log ? 1 : 0));

    if (synth->parsed()) return finish(ck_synth_corpus(s_out.c_str(), s_songs, s_seed));

    if (train->parsed()) {
        topts.preset = t_preset.c_str();
        double best_f1 = 0.0;
        int rc = ck_train(t_manifest.c_str(), &topts, t_out.c_str(), &best_f1);
        if (rc == CK_OK) std::printf("best val F1 %.6f\n", best_f1);
        return finish(rc);
    }

    if (detect->parsed()) {
        ModelGuard g;
        int rc = ck_model_open(d_model.c_str(), &g.m);
        if (rc != CK_OK) return finish(rc);
        const int smooth =
            d_smooth == "median" ? CK_SMOOTH_MEDIAN : CK_SMOOTH_TRIMMED_MEAN;
        const int threshold =
            d_threshold == "literal" ? CK_THRESHOLD_LITERAL : CK_THRESHOLD_MIDPOINT;
        long segments[2 * 1024];
        long n_segments = 0;
        rc = ck_model_detect(g.m, d_in.c_str(), d_out.c_str(), smooth, threshold,
                             segments, 1024, &n_segments);
        if (rc != CK_OK) return finish(rc);
        for (long i = 0; i < std::min<long>(n_segments, 1024); ++i)
            std::printf("%ld\t%ld\tchorus\n", segments[2 * i], segments[2 * i + 1]);
        return CK_OK;
    }

    if (eval->parsed()) {
        ModelGuard g;
        int rc = ck_model_open(e_model.c_str(), &g.m);
        if (rc != CK_OK) return finish(rc);
        double mean_f1 = 0.0, mean_auc = 0.0;
        rc = ck_model_eval(g.m, e_manifest.c_str(), e_split.c_str(), e_out.c_str(),
                           &mean_f1, &mean_auc);
        if (rc == CK_OK)
            std::printf("%s: mean F1 %.6f, mean AUC %.6f\n", e_split.c_str(), mean_f1,
                        mean_auc);
        return finish(rc);
    }

    if (ssm->parsed()) {
        ModelGuard g;
        int rc = ck_model_open(m_model.c_str(), &g.m);
        if (rc != CK_OK) return finish(rc);
        const long stage = m_stage == "multiscale" ? 0 : m_stage.back() - '0';
        const int distance =
            m_distance == "euclidean" ? CK_DISTANCE_EUCLIDEAN : CK_DISTANCE_COSINE;
        return finish(ck_model_ssm(g.m, m_in.c_str(), stage, distance, m_out.c_str()));
    }

    if (plot->parsed())
        return finish(ck_plot_curve(p_in.c_str(),
                                    p_annotation.empty() ? nullptr : p_annotation.c_str(),
                                    p_out.c_str()));

    return CK_EUSAGE;
}
