#pragma once

#include <fstream>

#include "hegs/checkpoint.hpp"
#include "hegs/config.hpp"
#include "hegs/eval.hpp"

namespace hegs {

struct TrainResult {
    bool aborted_nonfinite = false;
    int64_t abort_epoch = -1, abort_step = -1;
    int64_t last_epoch = 0;
    double best_ap50 = 0.0;
    int64_t best_epoch = -1;
    int64_t early_stopped_epoch = -1;  // -1 when training ran to completion
    std::string last_checkpoint, best_checkpoint;
    std::vector<double> step_losses;
};

struct EvalOutputs {
    APReport ap;
    std::vector<FadingReport> fading;  // tau sweep {0.25, 0.5, 0.75}, union reference
};

class Trainer {
public:
    explicit Trainer(const RunConfig& cfg);

    TrainResult train(const std::string& resume_path = "");

    // split: "train" or "val"
    EvalOutputs evaluate(const std::string& split);  // switches the model to eval mode
    std::vector<DetectionSample> load_split(const std::string& split) const;

    // Deterministic per-epoch sample order.
    std::vector<int64_t> epoch_order(int64_t epoch) const;

    RunConfig cfg;
    std::string out_dir;
    nn::HegsDetr model;
    Adam optim;

private:
    double lr_at(int64_t step, int64_t total_steps) const;
    void log_line(const std::string& line);

    std::vector<DetectionSample> train_set_, val_set_;
    std::ofstream log_;
};

// Shared by the CLI and the acceptance suite: evaluation over a sample set
// with stage traces.
EvalOutputs evaluate_model(const nn::HegsDetr& model,
                           const std::vector<DetectionSample>& samples, int batch_size,
                           double score_floor);

} // namespace hegs
