#pragma once

#include "hegs/trainer.hpp"

namespace hegs {

struct AnalyzeOptions {
    bool plot = false;  // also render PPM heatmaps / sampling scatters
};

struct AnalyzeOutputs {
    std::vector<std::string> files;
};

// Runs traced inference over the samples and writes, per image:
//   attention_map_<id>.bin   (flat tensor blob, shape = S5 spatial dims)
//   attention_map_<id>.csv
//   predictions_<id>.json    (per-stage boxes/scores/classes)
// plus one sampling_records.csv for the whole set, and optional PPM renders.
// Outputs are a pure function of (model weights, samples); re-running is
// byte-identical.
AnalyzeOutputs run_analysis(const nn::HegsDetr& model,
                            const std::vector<DetectionSample>& samples,
                            const std::string& out_dir, const AnalyzeOptions& opts = {});

// Renders already-exported artifacts (blob + csv) into PPM images; the plot
// subcommand uses this without needing a model.
std::vector<std::string> render_exports(const std::string& analysis_dir);

// ---- selftest ----

struct SelftestResult {
    struct Item {
        std::string name;
        bool pass = false;
        std::string detail;
    };
    std::vector<Item> items;
    double seconds = 0;

    bool all_pass() const {
        for (const auto& i : items)
            if (!i.pass) return false;
        return true;
    }
};

// Fast invariant sweep: shape rules, space-to-depth bijection, softmax rows,
// frequency-path realness, residual identities, assignment-vs-brute-force,
// query-collection group counts, box ranges.
SelftestResult run_selftest();

} // namespace hegs
