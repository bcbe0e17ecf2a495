#include "hegs/sqr.hpp"

namespace hegs {

using namespace hegs::ops;

const char* to_string(SqrVariant v) {
    switch (v) {
        case SqrVariant::Baseline: return "baseline";
        case SqrVariant::I: return "I";
        case SqrVariant::II: return "II";
        case SqrVariant::III: return "III";
    }
    return "?";
}

SqrVariant sqr_variant_from_string(const std::string& s) {
    if (s == "baseline" || s == "Baseline") return SqrVariant::Baseline;
    if (s == "I" || s == "1" || s == "i") return SqrVariant::I;
    if (s == "II" || s == "2" || s == "ii") return SqrVariant::II;
    if (s == "III" || s == "3" || s == "iii") return SqrVariant::III;
    throw Error("unknown sqr variant: " + s);
}

std::pair<int, int> sqr_group_counts(SqrVariant v) {
    switch (v) {
        case SqrVariant::Baseline: return {1, 1};
        case SqrVariant::I: return {1, 2};
        case SqrVariant::II: return {2, 3};
        case SqrVariant::III: return {2, 4};
    }
    return {1, 1};
}

std::vector<QueryGroup> sqr_collect(SqrVariant variant, int stage_just_run,
                                    const std::vector<QueryGroup>& prior_inputs,
                                    const std::vector<QueryGroup>& stage_outputs) {
    HEGS_CHECK(stage_just_run == 1 || stage_just_run == 2,
               "collections are built after stages 1 and 2 only");
    HEGS_CHECK(!prior_inputs.empty() && !stage_outputs.empty(), "empty collection");

    std::vector<QueryGroup> next = stage_outputs;  // primary chain stays first
    if (stage_just_run == 1) {
        // C^2: variants II/III re-introduce the initial queries
        if (variant == SqrVariant::II || variant == SqrVariant::III)
            next.insert(next.end(), prior_inputs.begin(), prior_inputs.end());
    } else {
        switch (variant) {
            case SqrVariant::Baseline:
                break;  // C^3 = D^2(C^2)
            case SqrVariant::I:
            case SqrVariant::III:
                // C^3 = D^2(C^2) u C^2
                next.insert(next.end(), prior_inputs.begin(), prior_inputs.end());
                break;
            case SqrVariant::II:
                // C^3 = D^2(C^2) u D^1(C^1): the latter is the primary element
                // of C^2
                next.push_back(prior_inputs.front());
                break;
        }
    }
    return next;
}

namespace {

// Runs one decoder stage over a whole collection by concatenating the groups
// along the query axis under a block-diagonal mask (exact -inf masking, so
// groups cannot interact), then splits the result back into groups.
struct StageRun {
    std::vector<QueryGroup> outputs;
    std::vector<StagePredictions> preds;  // one per group, tagged with the new path
};

StageRun run_stage_over_collection(const nn::Decoder& decoder, int stage_idx1,
                                   const std::vector<QueryGroup>& collection,
                                   const EncoderMemory& memory, DecoderTrace* trace) {
    const int G = static_cast<int>(collection.size());
    const int64_t Q = collection[0].state.num_queries();

    QueryState joint;
    if (G == 1) {
        joint = collection[0].state;
    } else {
        std::vector<Tensor> contents, refs;
        for (const auto& g : collection) {
            contents.push_back(g.state.content);
            refs.push_back(g.state.ref_boxes);
        }
        joint.content = concat(contents, 1);
        joint.ref_boxes = concat(refs, 1);
    }
    Tensor mask = G > 1 ? nn::group_attention_mask(G, Q) : Tensor();

    const auto& stage = *decoder.stages[stage_idx1 - 1];
    auto out = stage.forward(joint, memory, decoder.cfg.use_gape ? &decoder.gape : nullptr,
                             mask, stage_idx1, trace);

    StageRun run;
    for (int g = 0; g < G; ++g) {
        QueryGroup next;
        next.path = collection[g].path + "-" + std::to_string(stage_idx1);
        next.state.content = G == 1 ? out.next.content : narrow(out.next.content, 1, g * Q, Q);
        next.state.ref_boxes =
            G == 1 ? out.next.ref_boxes : narrow(out.next.ref_boxes, 1, g * Q, Q);
        run.outputs.push_back(next);

        StagePredictions p;
        p.stage_index = stage_idx1;
        p.group_tag = next.path;
        p.logits = G == 1 ? out.preds.logits : narrow(out.preds.logits, 1, g * Q, Q);
        p.boxes = G == 1 ? out.preds.boxes : narrow(out.preds.boxes, 1, g * Q, Q);
        run.preds.push_back(p);
    }
    return run;
}

bool is_primary_tag(const std::string& tag, int stage) {
    std::string expect = "0";
    for (int s = 1; s <= stage; ++s) expect += "-" + std::to_string(s);
    return tag == expect;
}

std::vector<MatchResult> match_batch(const StagePredictions& preds,
                                     const std::vector<GtInstances>& gts,
                                     const MatchWeights& mw) {
    const int64_t N = preds.logits.dim(0), Q = preds.logits.dim(1), K = preds.logits.dim(2);
    std::vector<MatchResult> matches(N);
    for (int64_t n = 0; n < N; ++n)
        matches[n] = hungarian_match(preds.logits.data() + n * Q * K,
                                     preds.boxes.data() + n * Q * 4, Q, K, gts[n], mw);
    return matches;
}

} // namespace

LossBreakdown sqr_training_loss(const nn::HegsDetr& model, const Tensor& images,
                                const std::vector<GtInstances>& gts, const SqrOptions& opts) {
    auto enc = model.encode(images);

    std::vector<StagePredictions> supervised;
    supervised.push_back(enc.selection.aux);

    std::vector<QueryGroup> collection{{enc.selection.queries, "0"}};
    const int num_stages = model.cfg.decoder.num_stages;
    for (int j = 1; j <= num_stages; ++j) {
        auto run = run_stage_over_collection(model.decoder, j, collection, enc.memory, nullptr);
        for (auto& p : run.preds) supervised.push_back(p);
        if (j < num_stages)
            collection = sqr_collect(opts.variant, j, collection, run.outputs);
    }

    LossBreakdown breakdown;
    Tensor total;
    for (const auto& preds : supervised) {
        const bool primary = preds.stage_index == 0 || is_primary_tag(preds.group_tag,
                                                                      preds.stage_index);
        const double weight = primary ? 1.0 : opts.recollected_weight;
        if (weight == 0.0) continue;  // zero-weight groups contribute nothing

        auto matches = match_batch(preds, gts, opts.match_weights);
        auto dl = detection_loss(preds, gts, matches, opts.loss_weights);

        LossItem item;
        item.stage = preds.stage_index;
        item.group = preds.group_tag;
        item.cls = dl.cls;
        item.l1 = dl.l1;
        item.giou = dl.giou;
        item.weight = weight;
        breakdown.items.push_back(item);

        Tensor weighted = weight == 1.0 ? dl.total : mul_scalar(dl.total, weight);
        total = total.defined() ? add(total, weighted) : weighted;
    }
    breakdown.total = total;
    return breakdown;
}

InferenceResult inference_forward(const nn::HegsDetr& model, const Tensor& images,
                                  bool capture_traces) {
    InferenceResult res;
    auto enc = model.encode(images, capture_traces);
    res.memory = enc.memory;
    res.encoder_aux = enc.selection.aux;
    res.initial_queries = enc.selection.queries;
    res.trace.capture = capture_traces;
    res.stages = model.decoder.run_primary_chain(enc.selection.queries, enc.memory,
                                                 capture_traces ? &res.trace : nullptr);
    return res;
}

} // namespace hegs
