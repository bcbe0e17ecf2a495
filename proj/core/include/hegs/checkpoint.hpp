#pragma once

#include "hegs/nn.hpp"
#include "hegs/optim.hpp"

namespace hegs {

struct CheckpointMeta {
    int format_version = 1;
    int64_t epoch = 0;
    uint64_t rng_epoch_cursor = 0;  // training-loop data-order stream position
    std::string config_json;        // canonical run-config snapshot
    double best_ap50 = 0.0;
    int64_t global_step = 0;
};

// Binary layout: magic "HEGSCKPT", u32 version, u64 header length, JSON
// header (meta + ordered tensor manifests), then raw little-endian doubles.
// Serialization is deterministic: reload -> re-save is byte-identical.
void save_checkpoint(const std::string& path, nn::Module& model, const Adam* optim,
                     const CheckpointMeta& meta);

// Loads into an already-constructed model; any parameter-name or shape
// mismatch aborts with a per-tensor diff.
CheckpointMeta load_checkpoint(const std::string& path, nn::Module& model, Adam* optim);

// Reads just the header (for config extraction / inspection).
CheckpointMeta peek_checkpoint(const std::string& path);

} // namespace hegs
