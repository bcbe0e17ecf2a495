#pragma once

#include "hegs/losses.hpp"
#include "hegs/model.hpp"

namespace hegs {

enum class SqrVariant { Baseline, I, II, III };

const char* to_string(SqrVariant v);
SqrVariant sqr_variant_from_string(const std::string& s);

// One entry of a stage's input collection, tagged with its composition path
// ("0", "0-1", "0-2", ...). The primary chain entry is always index 0.
struct QueryGroup {
    QueryState state;
    std::string path;
};

// Builds the input collection of stage j+1 from stage j's inputs and outputs.
// stage_just_run is 1-based; valid for j in {1, 2}.
std::vector<QueryGroup> sqr_collect(SqrVariant variant, int stage_just_run,
                                    const std::vector<QueryGroup>& prior_inputs,
                                    const std::vector<QueryGroup>& stage_outputs);

// (|C^2|, |C^3|) group counts per variant: Baseline (1,1), I (1,2), II (2,3),
// III (2,4).
std::pair<int, int> sqr_group_counts(SqrVariant variant);

struct SqrOptions {
    SqrVariant variant = SqrVariant::II;
    double recollected_weight = 1.0;  // weight of non-primary groups in the loss
    LossWeights loss_weights;
    MatchWeights match_weights;
};

// Full training-mode forward: every stage runs over its whole collection
// (groups concatenated with a block-diagonal attention mask), every
// (stage, group) prediction set plus the encoder auxiliary set is matched
// and summed into the loss.
LossBreakdown sqr_training_loss(const nn::HegsDetr& model, const Tensor& images,
                                const std::vector<GtInstances>& gts, const SqrOptions& opts);

struct InferenceResult {
    std::vector<StagePredictions> stages;  // primary chain, stages 1..J
    StagePredictions encoder_aux;
    QueryState initial_queries;
    DecoderTrace trace;
    EncoderMemory memory;

    const StagePredictions& final_stage() const { return stages.back(); }
};

// Eval path: only the primary chain executes; the SQR variant has no effect.
InferenceResult inference_forward(const nn::HegsDetr& model, const Tensor& images,
                                  bool capture_traces = false);

} // namespace hegs
