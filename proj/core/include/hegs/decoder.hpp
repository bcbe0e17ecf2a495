#pragma once

#include "hegs/neck.hpp"

namespace hegs {

struct DecoderConfig {
    int num_stages = 3;
    int64_t num_queries = 48;
    int64_t hidden_dim = 64;
    int heads = 4;
    int sampling_points = 4;  // M, per level per head
    int num_levels = 3;
    int64_t num_classes = 3;
    int64_t ffn_dim = 256;
    bool use_gape = true;  // false reproduces the content-only positional ablation

    void validate() const;
};

// Paired content queries and normalized (cx,cy,w,h) reference boxes. The
// boxes are plain values (detached); gradients flow through content only.
struct QueryState {
    Tensor content;    // (N, Q, D)
    Tensor ref_boxes;  // (N, Q, 4) in [0,1]

    int64_t num_queries() const { return content.defined() ? content.dim(1) : 0; }
};

struct StagePredictions {
    Tensor logits;  // (N, Q, K)
    Tensor boxes;   // (N, Q, 4), sigmoid-parameterized
    std::string group_tag;  // composition path such as "0-1-2"; "enc" for the aux head
    int stage_index = 0;    // 1..num_stages; 0 for the encoder auxiliary head
};

// One deformable sampling record; coordinates normalized to [0,1].
struct SamplingRecord {
    int64_t image = 0, query = 0;
    int stage = 0, head = 0, level = 0, point = 0;
    double ref_x = 0, ref_y = 0, x = 0, y = 0;
    double weight = 0;  // softmax weight / heads, so per-query rows sum to 1
};

struct DecoderTrace {
    bool capture = false;
    std::vector<SamplingRecord> samples;
    std::vector<Tensor> self_attention;  // per stage, (N,heads,T,T) detached
};

// Scalar -> dim sinusoidal kernel: [sin(2*pi*v*w_0), cos(2*pi*v*w_0), ...]
// with w_i = T^(-2i/dim). dim must be even.
std::vector<double> sinusoidal_pe(double v, int64_t dim, double temperature = 10000.0);
// Concatenated encodings of (cx,cy,w,h), each dim/2 wide -> 2*dim total.
std::vector<double> box_position_encoding(const std::array<double, 4>& box, int64_t dim);
// Batched constant tensor of box encodings: refs (N,Q,4) -> (N,Q,2D).
Tensor box_position_encodings(const Tensor& refs, int64_t dim);

double inverse_sigmoid(double p, double eps = 1e-6);

namespace nn {

// Content-conditioned positional queries: P = MLP_scale(O) (.) MLP_pos(PE(B)).
class Gape : public Module {
public:
    Gape() = default;
    Gape(int64_t dim, Rng& rng);

    Tensor positional_query(const Tensor& content, const Tensor& box_pe) const;

    Linear pos1, pos2;      // 2D -> D (ReLU), D -> D
    Linear scale1, scale2;  // D -> D (ReLU), D -> D

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("pos1", pos1);
        fn("pos2", pos2);
        fn("scale1", scale1);
        fn("scale2", scale2);
    }
};

// Initializes decoder queries from the auxiliary head over encoder tokens:
// top-N_q tokens by max class probability; ties resolved by lower token index.
class QuerySelector : public Module {
public:
    QuerySelector() = default;
    QuerySelector(const DecoderConfig& cfg, Rng& rng);

    struct Result {
        QueryState queries;
        StagePredictions aux;  // selected auxiliary predictions (stage 0)
        std::vector<std::vector<int64_t>> indices;
    };
    Result forward(const EncoderMemory& memory, int64_t num_queries) const;

    Linear cls_head;
    Linear box1, box2, box3;
    Linear content_proj;
    LayerNorm content_norm;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("cls_head", cls_head);
        fn("box1", box1);
        fn("box2", box2);
        fn("box3", box3);
        fn("content_proj", content_proj);
        fn("content_norm", content_norm);
    }
};

// Grid anchors for encoder tokens: centers at cell centers, w=h=0.05*2^level.
Tensor token_anchors(const EncoderMemory& memory);

class DecoderStage : public Module {
public:
    DecoderStage() = default;
    DecoderStage(const DecoderConfig& cfg, Rng& rng);

    struct Output {
        QueryState next;  // content updated, boxes refined and detached
        StagePredictions preds;
    };
    // group_mask: additive (T,T) or undefined; stage_index only labels trace
    // rows and predictions.
    Output forward(const QueryState& q, const EncoderMemory& memory, const Gape* gape,
                   const Tensor& group_mask, int stage_index, DecoderTrace* trace) const;

    MultiheadAttention self_attn;
    LayerNorm ln1, ln2, ln3;
    Linear w_value, w_offsets, w_weights, w_out;
    Linear ffn1, ffn2;
    Linear cls_head;
    Linear box1, box2, box3;

    DecoderConfig cfg;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("self_attn", self_attn);
        fn("ln1", ln1);
        fn("w_value", w_value);
        fn("w_offsets", w_offsets);
        fn("w_weights", w_weights);
        fn("w_out", w_out);
        fn("ln2", ln2);
        fn("ffn1", ffn1);
        fn("ffn2", ffn2);
        fn("ln3", ln3);
        fn("cls_head", cls_head);
        fn("box1", box1);
        fn("box2", box2);
        fn("box3", box3);
    }
};

class Decoder : public Module {
public:
    Decoder() = default;
    Decoder(const DecoderConfig& cfg, Rng& rng);

    // Primary chain q0 -> ... -> q^{0-1-...-J}; returns per-stage predictions.
    std::vector<StagePredictions> run_primary_chain(const QueryState& q0,
                                                    const EncoderMemory& memory,
                                                    DecoderTrace* trace = nullptr) const;

    DecoderConfig cfg;
    Gape gape;
    QuerySelector selector;
    std::vector<std::unique_ptr<DecoderStage>> stages;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("gape", gape);
        fn("selector", selector);
        for (size_t i = 0; i < stages.size(); ++i)
            fn("stage" + std::to_string(i + 1), *stages[i]);
    }
};

// Block-diagonal additive mask for G groups of size Q each: 0 within a group,
// -inf across groups (exact zeros after softmax, so groups cannot interact).
Tensor group_attention_mask(int groups, int64_t queries_per_group);

} // namespace nn
} // namespace hegs
