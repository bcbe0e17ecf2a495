#pragma once

#include "hegs/data.hpp"
#include "hegs/sqr.hpp"

namespace hegs {

struct OptimConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double grad_clip = 0.1;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int epochs = 60;
    int batch_size = 8;
    bool cosine_schedule = false;
    int warmup_steps = 0;
};

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" | "coco"
    SyntheticSceneConfig synthetic;
    int train_size = 500;
    int val_size = 100;
    std::string coco_train_json, coco_val_json;
    int image_size = 128;  // resize target; must be divisible by 32
    bool flip_augment = false;  // horizontal flips on the train split
};

struct RunConfig {
    ModelConfig model;
    SqrVariant sqr_variant = SqrVariant::II;
    DatasetConfig dataset;
    OptimConfig optim;
    uint64_t seed = 0;
    std::string output_dir = "runs/default";
    int eval_interval = 1;          // epochs between validation passes
    double recollected_weight = 1.0;
    double early_stop_ap50 = -1.0;  // stop once val AP50 reaches this; <0 = off
    double score_floor = 0.05;      // stage TP/FP flagging floor

    // Named presets. "desk" is the CPU-trainable default; "paper" mirrors the
    // full-scale training recipe (640px, 300 epochs, batch 16, lr 1e-4).
    static RunConfig desk_profile();
    static RunConfig paper_profile();

    void validate(bool check_paths = true) const;
};

// File format: JSON object; an optional "profile" key selects the preset the
// remaining keys override. Serialization is canonical (sorted keys), so
// parse -> serialize -> parse is a fixed point.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

// Resolves the effective output directory, honoring $HEGS_OUTPUT_ROOT for
// relative paths.
std::string resolve_output_dir(const RunConfig& cfg);

} // namespace hegs
