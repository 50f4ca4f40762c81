#include "trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>

#include "io.hpp"
#include "metrics.hpp"
#include "postprocess.hpp"

namespace fs = std::filesystem;

namespace chorus {

void TrainConfig::validate() const {
    if (batch_size < 1 || crop_frames < 1 || validate_every < 1 || patience < 1 ||
        max_iterations < 1)
        throw UsageError("train config: all counts must be positive");
    if (lr <= 0) throw UsageError("train config: lr must be positive");
    if (crop_frames % kFramesPerSecond != 0)
        throw UsageError("train config: crop_frames must be divisible by " +
                         std::to_string(kFramesPerSecond));
}

namespace {

TensorPtr<float> crop_to_input(const Crop& c) {
    auto x = make_tensor<float>({c.n_mels, c.n_frames, 1});
    for (long t = 0; t < c.n_frames; ++t)
        for (long f = 0; f < c.n_mels; ++f)
            x->data[static_cast<size_t>(f * c.n_frames + t)] =
                c.features[static_cast<size_t>(t * c.n_mels + f)];
    return x;
}

} // namespace

double train_step(Model<float>& model, const std::vector<Crop>& batch,
                  AdamState<float>& opt, double lr, long iteration) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    std::vector<TensorPtr<float>> params;
    params.reserve(model.params.size());
    for (auto& [name, t] : model.params) {
        t->zero_grad();
        params.push_back(t);
    }
    const float inv_b = 1.0f / static_cast<float>(batch.size());
    double loss_sum = 0.0;
    for (const auto& crop : batch) {
        Graph<float> g;
        auto out = model_forward(g, model, crop_to_input(crop));
        if (out->dim(0) != static_cast<long>(crop.targets.size()))
            throw DimensionError("train_step: " + std::to_string(out->dim(0)) +
                                 " outputs vs " + std::to_string(crop.targets.size()) +
                                 " targets");
        auto target = make_tensor<float>(out->dims);
        for (size_t i = 0; i < crop.targets.size(); ++i)
            target->data[i] = static_cast<float>(crop.targets[i]);
        auto loss = g.mse_loss(out, target);
        loss_sum += static_cast<double>(loss->data[0]);
        try {
            g.backward(g.scale(loss, inv_b));
        } catch (const NumericError&) {
            throw NumericError("train_step: non-finite loss at iteration " +
                               std::to_string(iteration) + " (lr " +
                               std::to_string(lr) + ")");
        }
    }
    const double loss = loss_sum / static_cast<double>(batch.size());
    if (!std::isfinite(loss))
        throw NumericError("train_step: non-finite loss at iteration " +
                           std::to_string(iteration) + " (lr " +
                           std::to_string(lr) + ")");
    adam_step(params, opt, lr);
    return loss;
}

double validate(const Model<float>& model, const std::vector<LabeledExample>& val) {
    if (val.empty()) throw UsageError("validate: empty validation set");
    double f1_sum = 0.0;
    long scored = 0;
    for (const auto& ex : val) {
        if (ex.features.n_frames < model.cfg.fps) {
            std::fprintf(stderr, "validate: skipping %s (%ld frames, need %ld)\n",
                         ex.song_id.c_str(), ex.features.n_frames, model.cfg.fps);
            continue;
        }
        auto curve = predict(model, ex.features);
        auto mask = postprocess_curve(curve.values);
        auto truth = ex.targets;
        truth.resize(mask.values.size(), 0);
        f1_sum += prf(mask.values, truth).f1;
        ++scored;
    }
    if (!scored) throw UsageError("validate: every song was too short to score");
    return f1_sum / static_cast<double>(scored);
}

FitResult fit(const TrainConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir) {
    cfg.validate();
    std::vector<LabeledExample> train, val;
    for (const auto& entry : read_manifest(manifest_path)) {
        if (entry.split == "train") train.push_back(load_example(entry));
        else if (entry.split == "val") val.push_back(load_example(entry));
    }
    if (train.empty()) throw UsageError(manifest_path + ": no train split");
    if (val.empty()) throw UsageError(manifest_path + ": no val split");

    fs::create_directories(out_dir);
    const std::string best_path = (fs::path(out_dir) / "best.dckp").string();
    const std::string log_path = (fs::path(out_dir) / "log.tsv").string();

    Rng rng(cfg.seed);
    auto mc = make_config(cfg.preset);
    mc.single_scale = cfg.single_scale;
    mc.disable_attention = cfg.disable_attention;
    auto model = build_model<float>(mc, rng);
    auto opt = AdamState<float>::init([&] {
        std::vector<TensorPtr<float>> ps;
        for (auto& [name, t] : model.params) ps.push_back(t);
        return ps;
    }());

    {
        std::ostringstream os;
        os << serialize_config(model.cfg);
        os << "batch_size=" << cfg.batch_size << "\ncrop_frames=" << cfg.crop_frames
           << "\nlr=" << cfg.lr << "\nvalidate_every=" << cfg.validate_every
           << "\npatience=" << cfg.patience << "\nmax_iterations=" << cfg.max_iterations
           << "\nseed=" << cfg.seed << "\n";
        io::write_text_file((fs::path(out_dir) / "config.txt").string(), os.str());
    }

    std::ostringstream log;
    log << "iteration\tloss\tval_f1\tbest_val_f1\n";
    TrainState st;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size(); // forces a reshuffle on first use
    double last_loss = 0.0;
    bool stop = false;

    while (!stop && st.iteration < cfg.max_iterations) {
        std::vector<Crop> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        while (batch.size() < static_cast<size_t>(cfg.batch_size)) {
            if (cursor >= order.size()) {
                // new epoch: fresh crop of every training song, shuffled
                for (size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1],
                              order[static_cast<size_t>(rng.uniform_int(0, long(i) - 1))]);
                cursor = 0;
            }
            batch.push_back(random_crop(train[order[cursor++]], cfg.crop_frames, rng));
        }
        last_loss = train_step(model, batch, opt, cfg.lr, st.iteration);
        ++st.iteration;

        if (st.iteration % cfg.validate_every == 0) {
            const double f1 = validate(model, val);
            if (f1 > st.best_val_f1) {
                st.best_val_f1 = f1;
                st.best_iteration = st.iteration;
                st.iterations_since_best = 0;
                save_model(model, best_path);
            } else {
                st.iterations_since_best += cfg.validate_every;
            }
            char row[128];
            std::snprintf(row, sizeof row, "%ld\t%.9g\t%.9g\t%.9g\n", st.iteration,
                          last_loss, f1, st.best_val_f1);
            log << row;
            if (st.iterations_since_best >= cfg.patience) stop = true;
            if (cfg.target_f1 > 0 && st.best_val_f1 >= cfg.target_f1) stop = true;
        }
    }

    io::write_text_file(log_path, log.str());
    FitResult r;
    r.checkpoint_path = best_path;
    r.best_val_f1 = st.best_val_f1;
    r.best_iteration = st.best_iteration;
    r.iterations_run = st.iteration;
    return r;
}

} // namespace chorus
