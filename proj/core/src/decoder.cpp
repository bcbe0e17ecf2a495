#include "hegs/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hegs {

using namespace hegs::ops;

void DecoderConfig::validate() const {
    HEGS_CHECK(num_stages >= 1, "decoder needs at least one stage");
    HEGS_CHECK(hidden_dim % 8 == 0,
               "hidden_dim must be divisible by 8 so the four coordinate encodings tile it");
    HEGS_CHECK(hidden_dim % heads == 0, "hidden_dim must divide heads");
    HEGS_CHECK(num_levels == 3, "decoder reads exactly 3 memory levels");
    HEGS_CHECK(num_queries > 0 && num_classes > 0 && sampling_points > 0,
               "queries/classes/points must be positive");
}

std::vector<double> sinusoidal_pe(double v, int64_t dim, double temperature) {
    HEGS_CHECK(dim > 0 && dim % 2 == 0, "sinusoidal_pe needs an even dim, got " << dim);
    std::vector<double> out(static_cast<size_t>(dim));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (int64_t i = 0; i < dim / 2; ++i) {
        const double omega = std::pow(temperature, -2.0 * static_cast<double>(i) / dim);
        out[2 * i] = std::sin(kTwoPi * v * omega);
        out[2 * i + 1] = std::cos(kTwoPi * v * omega);
    }
    return out;
}

std::vector<double> box_position_encoding(const std::array<double, 4>& box, int64_t dim) {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(2 * dim));
    for (double coord : box) {
        auto pe = sinusoidal_pe(coord, dim / 2);
        out.insert(out.end(), pe.begin(), pe.end());
    }
    return out;
}

Tensor box_position_encodings(const Tensor& refs, int64_t dim) {
    const int64_t N = refs.dim(0), Q = refs.dim(1);
    Tensor out = Tensor::zeros({N, Q, 2 * dim});
    const double* rv = refs.data();
    double* ov = out.data();
    for (int64_t i = 0; i < N * Q; ++i) {
        auto enc = box_position_encoding({rv[i * 4], rv[i * 4 + 1], rv[i * 4 + 2], rv[i * 4 + 3]},
                                         dim);
        std::copy(enc.begin(), enc.end(), ov + i * 2 * dim);
    }
    return out;
}

double inverse_sigmoid(double p, double eps) {
    const double q = std::min(std::max(p, eps), 1.0 - eps);
    return std::log(q / (1.0 - q));
}

namespace nn {

namespace {

constexpr double kFocalPriorBias = -4.59511985013459;  // log(0.01/0.99)

// Constant tensor of inverse-sigmoid(refs); no tape edges.
Tensor logit_of(const Tensor& refs) {
    Tensor out = Tensor::zeros(refs.shape());
    const double* rv = refs.data();
    double* ov = out.data();
    for (int64_t i = 0; i < refs.numel(); ++i) ov[i] = inverse_sigmoid(rv[i]);
    return out;
}

} // namespace

Gape::Gape(int64_t dim, Rng& rng) {
    pos1 = Linear(2 * dim, dim, rng);
    pos2 = Linear(dim, dim, rng);
    scale1 = Linear(dim, dim, rng);
    scale2 = Linear(dim, dim, rng);
}

Tensor Gape::positional_query(const Tensor& content, const Tensor& box_pe) const {
    Tensor pos = pos2.forward(relu(pos1.forward(box_pe)));
    Tensor scale = scale2.forward(relu(scale1.forward(content)));
    return mul(scale, pos);
}

Tensor token_anchors(const EncoderMemory& memory) {
    const int64_t N = memory.tokens.dim(0), T = memory.tokens.dim(1);
    Tensor anchors = Tensor::zeros({N, T, 4});
    double* av = anchors.data();
    for (int64_t n = 0; n < N; ++n) {
        int64_t t = 0;
        for (size_t lvl = 0; lvl < memory.level_shapes.size(); ++lvl) {
            const auto [H, W] = memory.level_shapes[lvl];
            const double wh = 0.05 * std::pow(2.0, static_cast<double>(lvl));
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j, ++t) {
                    double* a = av + (n * T + t) * 4;
                    a[0] = (j + 0.5) / static_cast<double>(W);
                    a[1] = (i + 0.5) / static_cast<double>(H);
                    a[2] = wh;
                    a[3] = wh;
                }
        }
        HEGS_CHECK(t == T, "anchor count mismatch");
    }
    return anchors;
}

QuerySelector::QuerySelector(const DecoderConfig& cfg, Rng& rng) {
    const int64_t D = cfg.hidden_dim;
    cls_head = Linear(D, cfg.num_classes, rng);
    zero_(cls_head.weight);
    fill_(cls_head.bias, kFocalPriorBias);
    box1 = Linear(D, D, rng);
    box2 = Linear(D, D, rng);
    box3 = Linear(D, 4, rng);
    zero_(box3.weight);
    zero_(box3.bias);
    content_proj = Linear(D, D, rng);
    content_norm = LayerNorm(D);
}

QuerySelector::Result QuerySelector::forward(const EncoderMemory& memory,
                                             int64_t num_queries) const {
    const Tensor& tokens = memory.tokens;
    const int64_t N = tokens.dim(0), T = tokens.dim(1);
    HEGS_CHECK(T >= num_queries,
               "memory has " << T << " tokens but " << num_queries << " queries requested");

    Tensor logits = cls_head.forward(tokens);  // (N,T,K)
    Tensor delta = box3.forward(relu(box2.forward(relu(box1.forward(tokens)))));
    Tensor anchors = token_anchors(memory);
    Tensor boxes = sigmoid(add(delta, logit_of(anchors)));  // (N,T,4)

    // top-N_q by max class probability; stable order pins equal scores to the
    // lower token index
    const int64_t K = logits.dim(2);
    std::vector<std::vector<int64_t>> indices(N);
    const double* lv = logits.data();
    for (int64_t n = 0; n < N; ++n) {
        std::vector<std::pair<double, int64_t>> scored(T);
        for (int64_t t = 0; t < T; ++t) {
            double best = -std::numeric_limits<double>::infinity();
            for (int64_t k = 0; k < K; ++k) best = std::max(best, lv[(n * T + t) * K + k]);
            scored[t] = {best, t};
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        indices[n].resize(num_queries);
        for (int64_t q = 0; q < num_queries; ++q) indices[n][q] = scored[q].second;
    }

    Result res;
    res.indices = indices;
    Tensor sel_tokens = gather_rows(tokens, indices);
    res.queries.content = content_norm.forward(content_proj.forward(sel_tokens));
    res.queries.ref_boxes = gather_rows(boxes, indices).detach();

    res.aux.logits = gather_rows(logits, indices);
    res.aux.boxes = gather_rows(boxes, indices);
    res.aux.group_tag = "enc";
    res.aux.stage_index = 0;
    return res;
}

DecoderStage::DecoderStage(const DecoderConfig& config, Rng& rng) : cfg(config) {
    const int64_t D = cfg.hidden_dim;
    const int H = cfg.heads, L = cfg.num_levels, M = cfg.sampling_points;

    self_attn = MultiheadAttention(D, H, rng);
    ln1 = LayerNorm(D);
    w_value = Linear(D, D, rng);
    w_offsets = Linear(D, static_cast<int64_t>(H) * L * M * 2, rng);
    w_weights = Linear(D, static_cast<int64_t>(H) * L * M, rng);
    w_out = Linear(D, D, rng);
    ln2 = LayerNorm(D);
    ffn1 = Linear(D, cfg.ffn_dim, rng);
    ffn2 = Linear(cfg.ffn_dim, D, rng);
    ln3 = LayerNorm(D);
    cls_head = Linear(D, cfg.num_classes, rng);
    fill_(cls_head.bias, kFocalPriorBias);
    box1 = Linear(D, D, rng);
    box2 = Linear(D, D, rng);
    box3 = Linear(D, 4, rng);
    zero_(box3.weight);  // refinement starts as identity on the reference boxes
    zero_(box3.bias);

    // offsets: zero weights, directional biases spreading the initial points
    // around the reference like a deformable grid
    zero_(w_offsets.weight);
    double* ob = w_offsets.bias.values().data();
    for (int h = 0; h < H; ++h) {
        const double theta = 2.0 * M_PI * h / H;
        for (int l = 0; l < L; ++l)
            for (int m = 0; m < M; ++m) {
                const double r = 0.5 * (m + 1) / M;
                ob[((h * L + l) * M + m) * 2 + 0] = std::cos(theta) * r;
                ob[((h * L + l) * M + m) * 2 + 1] = std::sin(theta) * r;
            }
    }
    zero_(w_weights.weight);  // uniform attention over levels*points at init
    zero_(w_weights.bias);
}

DecoderStage::Output DecoderStage::forward(const QueryState& q, const EncoderMemory& memory,
                                           const Gape* gape, const Tensor& group_mask,
                                           int stage_index, DecoderTrace* trace) const {
    const int64_t N = q.content.dim(0), Q = q.content.dim(1), D = cfg.hidden_dim;
    const int H = cfg.heads, L = cfg.num_levels, M = cfg.sampling_points;

    // positional queries are rebuilt from the current reference boxes
    Tensor P;
    if (gape) {
        Tensor pe = box_position_encodings(q.ref_boxes, D);
        P = gape->positional_query(q.content, pe);
    } else {
        P = Tensor::zeros({N, Q, D});
    }

    // self-attention: positional terms on q/k only, values carry content
    Tensor qp = add(q.content, P);
    Tensor attn_map;
    Tensor sa = self_attn.forward(qp, qp, q.content, group_mask,
                                  trace && trace->capture ? &attn_map : nullptr);
    Tensor content = ln1.forward(add(q.content, sa));
    if (trace && trace->capture) trace->self_attention.push_back(attn_map);

    // deformable cross-attention over the multi-scale memory
    Tensor cq = add(content, P);
    Tensor offsets = reshape(w_offsets.forward(cq), {N, Q, H, L, M, 2});
    Tensor weight_logits = reshape(w_weights.forward(cq), {N, Q, H, static_cast<int64_t>(L) * M});
    Tensor attn_w = softmax_lastdim(weight_logits);  // (N,Q,H,L*M)

    // sampling points: center + offset*wh, clamped into the unit square
    Tensor centers = reshape(narrow(q.ref_boxes, 2, 0, 2), {N, Q, 1, 1, 1, 2});
    Tensor sizes = reshape(narrow(q.ref_boxes, 2, 2, 2), {N, Q, 1, 1, 1, 2});
    Tensor points = clamp(add(centers, mul(offsets, sizes)), 0.0, 1.0);  // (N,Q,H,L,M,2)

    Tensor values = w_value.forward(memory.tokens);  // (N,T,D)
    std::vector<Tensor> per_level;
    for (int l = 0; l < L; ++l) {
        const auto [Hl, Wl] = memory.level_shapes[l];
        Tensor lvl = narrow(values, 1, memory.level_start_offsets[l], Hl * Wl);
        Tensor fmap = permute(reshape(lvl, {N, Hl, Wl, D}), {0, 3, 1, 2});  // (N,D,H,W)
        Tensor coords = reshape(narrow(points, 3, l, 1), {N, Q * H * M, 2});
        Tensor sampled = grid_sample_bilinear(fmap, coords);  // (N,Q*H*M,D)
        sampled = take_head_channels(reshape(sampled, {N, Q, H, M, D}), H);
        per_level.push_back(sampled);  // (N,Q,H,M,dh)
    }
    Tensor stacked = concat(per_level, 3);                       // (N,Q,H,L*M,dh) level-major
    Tensor weighted = mul(stacked, reshape(attn_w, {N, Q, H, static_cast<int64_t>(L) * M, 1}));
    Tensor ctx = reshape(sum_axis(weighted, 3), {N, Q, D});
    content = ln2.forward(add(content, w_out.forward(ctx)));

    Tensor ff = ffn2.forward(relu(ffn1.forward(content)));
    content = ln3.forward(add(content, ff));

    Tensor logits = cls_head.forward(content);
    Tensor delta = box3.forward(relu(box2.forward(relu(box1.forward(content)))));
    Tensor boxes = sigmoid(add(delta, logit_of(q.ref_boxes)));
    check_finite(boxes, "decoder stage boxes");

    if (trace && trace->capture) {
        const double* pv = points.data();
        const double* wv = attn_w.data();
        const double* rv = q.ref_boxes.data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t qi = 0; qi < Q; ++qi)
                for (int h = 0; h < H; ++h)
                    for (int l = 0; l < L; ++l)
                        for (int m = 0; m < M; ++m) {
                            SamplingRecord rec;
                            rec.image = n;
                            rec.query = qi;
                            rec.stage = stage_index;
                            rec.head = h;
                            rec.level = l;
                            rec.point = m;
                            rec.ref_x = rv[(n * Q + qi) * 4 + 0];
                            rec.ref_y = rv[(n * Q + qi) * 4 + 1];
                            const int64_t pbase =
                                ((((n * Q + qi) * H + h) * L + l) * M + m) * 2;
                            rec.x = pv[pbase + 0];
                            rec.y = pv[pbase + 1];
                            rec.weight =
                                wv[((n * Q + qi) * H + h) * L * M + l * M + m] / H;
                            trace->samples.push_back(rec);
                        }
    }

    Output out;
    out.next.content = content;
    out.next.ref_boxes = boxes.detach();
    out.preds.logits = logits;
    out.preds.boxes = boxes;
    out.preds.stage_index = stage_index;
    return out;
}

Decoder::Decoder(const DecoderConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    gape = Gape(cfg.hidden_dim, rng);
    selector = QuerySelector(cfg, rng);
    for (int s = 0; s < cfg.num_stages; ++s)
        stages.push_back(std::make_unique<DecoderStage>(cfg, rng));
}

std::vector<StagePredictions> Decoder::run_primary_chain(const QueryState& q0,
                                                         const EncoderMemory& memory,
                                                         DecoderTrace* trace) const {
    std::vector<StagePredictions> preds;
    QueryState q = q0;
    std::string tag = "0";
    for (int s = 0; s < cfg.num_stages; ++s) {
        auto out = stages[s]->forward(q, memory, cfg.use_gape ? &gape : nullptr, Tensor(),
                                      s + 1, trace);
        tag += "-" + std::to_string(s + 1);
        out.preds.group_tag = tag;
        preds.push_back(out.preds);
        q = out.next;
    }
    return preds;
}

Tensor group_attention_mask(int groups, int64_t queries_per_group) {
    const int64_t T = groups * queries_per_group;
    Tensor mask = Tensor::zeros({T, T});
    double* mv = mask.data();
    const double ninf = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j < T; ++j)
            if (i / queries_per_group != j / queries_per_group) mv[i * T + j] = ninf;
    return mask;
}

} // namespace nn
} // namespace hegs
