#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace chorus {

struct TrainConfig {
    long batch_size = 4;
    long crop_frames = 3096;
    double lr = 1e-4;
    long validate_every = 50;
    long patience = 500;       // iterations without val improvement
    long max_iterations = 20000;
    uint64_t seed = 7;
    std::string preset = "small";
    bool single_scale = false;      // ablation: stacked convs instead of branches
    bool disable_attention = false; // ablation: conv instead of self-attention
    double target_f1 = 0.0; // > 0: stop once best val F1 reaches this

    void validate() const;
};

struct TrainState {
    long iteration = 0;
    double best_val_f1 = -1.0;
    long best_iteration = 0;
    long iterations_since_best = 0;
};

struct FitResult {
    std::string checkpoint_path; // best.dckp inside the run directory
    double best_val_f1 = 0.0;
    long best_iteration = 0;
    long iterations_run = 0;
};

// One optimizer update on a batch of crops; returns the batch-mean MSE.
// Gradients are zeroed here, so callers just hand over fresh crops.
double train_step(Model<float>& model, const std::vector<Crop>& batch,
                  AdamState<float>& opt, double lr, long iteration);

// Full-length forward per song, default postprocess, per-song F1 averaged.
// Songs shorter than one second are skipped with a warning on stderr.
double validate(const Model<float>& model, const std::vector<LabeledExample>& val);

// Training loop: epoch = one random crop per train song, shuffled; validates
// every cfg.validate_every iterations, keeps the best-F1 checkpoint, stops on
// patience or the iteration cap. Writes log.tsv, best.dckp and config.txt
// into out_dir.
FitResult fit(const TrainConfig& cfg, const std::string& manifest_path,
              const std::string& out_dir);

} // namespace chorus
