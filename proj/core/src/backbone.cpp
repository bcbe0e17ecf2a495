#include "hegs/backbone.hpp"

namespace hegs {

void BackboneConfig::validate() const {
    HEGS_CHECK(stage_channels.size() == 4 && blocks_per_stage.size() == 4,
               "backbone uses exactly 4 stages");
    HEGS_CHECK(stem_channels > 0 && stem_channels % 2 == 0, "stem channels must be even");
    for (int64_t c : stage_channels)
        HEGS_CHECK(c > 0 && c % 2 == 0,
                   "stage channels must be even for the half-channel split, got " << c);
    for (int s : fca_stages)
        HEGS_CHECK(s >= 1 && s <= 4, "fca_stages must be within 1..4, got " << s);
    HEGS_CHECK(attention_heads > 0, "attention_heads must be positive");
}

namespace nn {

using namespace hegs::ops;

ResidualUnit::ResidualUnit(int64_t channels, Rng& rng) {
    body = ConvBNReLU(channels, channels, 3, 1, rng);
}

Tensor ResidualUnit::forward(const Tensor& x) const { return add(x, body.forward(x)); }

BasicPair::BasicPair(int64_t channels, Rng& rng) {
    u1 = ResidualUnit(channels, rng);
    u2 = ResidualUnit(channels, rng);
}

Tensor BasicPair::forward(const Tensor& x) const { return u2.forward(u1.forward(x)); }

ChannelGate::ChannelGate(int64_t channels, Rng& rng) {
    const int64_t mid = std::max<int64_t>(channels / 4, 4);
    fc1 = Linear(channels, mid, rng);
    fc2 = Linear(mid, channels, rng);
}

Tensor ChannelGate::forward(const Tensor& x) const {
    Tensor s = global_avg_pool(x);  // (N,C)
    s = sigmoid(fc2.forward(relu(fc1.forward(s))));
    const int64_t N = x.dim(0), C = x.dim(1);
    Tensor gate = reshape(s, {N, C, 1, 1});
    return mul(x, gate);
}

Sfa::Sfa(int64_t channels, int heads, Rng& rng) {
    HEGS_CHECK(channels % heads == 0,
               "channels " << channels << " not divisible by heads " << heads);
    attn = MultiheadAttention(channels, heads, rng);
    channel = ChannelGate(channels, rng);
    freq_gate_grid = register_parameter("freq_gate_grid", Tensor::full({channels, 8, 8}, 1.0));
    branch_weights = register_parameter("branch_weights", Tensor::full({3}, 1.0));
    proj_out = Conv2d(channels, channels, 1, 1, 0, rng);
}

Tensor Sfa::forward(const Tensor& x) const { return forward_traced(x, nullptr); }

Tensor Sfa::forward_traced(const Tensor& x, Tensor* attn_map) const {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    HEGS_CHECK(H >= 2 && W >= 2, "sfa needs spatial dims >= 2");

    Tensor tokens = reshape(permute(x, {0, 2, 3, 1}), {N, H * W, C});
    Tensor sp = attn.forward(tokens, tokens, tokens, Tensor(), attn_map);
    sp = permute(reshape(sp, {N, H, W, C}), {0, 3, 1, 2});

    Tensor cp = channel.forward(x);
    Tensor fp = freq_gate(x, freq_gate_grid);

    Tensor w_sp = narrow(branch_weights, 0, 0, 1);
    Tensor w_cp = narrow(branch_weights, 0, 1, 1);
    Tensor w_fp = narrow(branch_weights, 0, 2, 1);
    Tensor fused = add(add(mul(sp, w_sp), mul(cp, w_cp)), mul(fp, w_fp));
    return proj_out.forward(fused);
}

Dffn::Dffn(int64_t channels, Rng& rng) {
    dw = Conv2d(channels, channels, 3, 1, 1, rng, static_cast<int>(channels));
    pw_gate = Conv2d(channels, channels, 1, 1, 0, rng);
    proj_out = Conv2d(channels, channels, 1, 1, 0, rng);
}

Tensor Dffn::forward(const Tensor& x) const {
    Tensor low = avg_blur3(x);
    Tensor high = sub(x, low);  // complementary by construction
    Tensor gate = sigmoid(pw_gate.forward(dw.forward(high)));
    Tensor enhanced = mul(high, gate);
    return proj_out.forward(add(low, enhanced));
}

FcaBlock::FcaBlock(int64_t channels, int heads, Rng& rng) {
    ln1 = LayerNorm(channels);
    sfa = Sfa(channels, heads, rng);
    ln2 = LayerNorm(channels);
    dffn = Dffn(channels, rng);
}

Tensor layer_norm_nchw(const Tensor& x, const LayerNorm& ln) {
    Tensor t = permute(x, {0, 2, 3, 1});
    t = ln.forward(t);
    return permute(t, {0, 3, 1, 2});
}

Tensor FcaBlock::forward(const Tensor& x) const {
    Tensor x_sfa = add(sfa.forward(layer_norm_nchw(x, ln1)), x);
    Tensor out = add(dffn.forward(layer_norm_nchw(x_sfa, ln2)), x_sfa);
    return out;
}

CspBlock::CspBlock(int64_t channels, std::unique_ptr<Block> inner_, Rng& rng)
    : inner(std::move(inner_)) {
    HEGS_CHECK(channels % 2 == 0, "csp block needs an even channel count, got " << channels);
    conv_in = Conv2d(channels, channels, 1, 1, 0, rng);
    conv_out = Conv2d(channels, channels, 1, 1, 0, rng);
}

Tensor CspBlock::forward(const Tensor& x) const {
    const int64_t C = x.dim(1);
    HEGS_CHECK(C % 2 == 0, "csp forward needs even channels, got " << C);
    Tensor xp = conv_in.forward(x);
    Tensor x1 = narrow(xp, 1, 0, C / 2);
    Tensor x2 = narrow(xp, 1, C / 2, C / 2);
    Tensor y2 = inner->forward(x2);
    HEGS_CHECK(y2.shape() == x2.shape(),
               "csp inner transform changed shape " << shape_str(x2.shape()) << " -> "
                                                    << shape_str(y2.shape()));
    Tensor y = conv_out.forward(concat({x1, y2}, 1));
    check_finite(y, "csp_block");
    return y;
}

void set_identity_1x1(Conv2d& conv) {
    const int64_t cout = conv.weight.dim(0), cin = conv.weight.dim(1);
    HEGS_CHECK(cout == cin && conv.weight.dim(2) == 1 && conv.weight.dim(3) == 1,
               "identity init requires square 1x1 conv");
    zero_(conv.weight);
    for (int64_t c = 0; c < cout; ++c) conv.weight.values()[c * cin + c] = 1.0;
    if (conv.bias.defined()) zero_(conv.bias);
}

Hfesnet::Hfesnet(const BackboneConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    stem1 = ConvBNReLU(3, cfg.stem_channels, 3, 2, rng);
    stem2 = ConvBNReLU(cfg.stem_channels, cfg.stage_channels[0], 3, 2, rng);

    for (int s = 1; s <= 4; ++s) {
        const int64_t ch = cfg.stage_channels[s - 1];
        if (s > 1)
            downsamples.push_back(
                std::make_unique<ConvBNReLU>(cfg.stage_channels[s - 2], ch, 3, 2, rng));
        std::vector<std::unique_ptr<CspBlock>> blocks;
        for (int b = 0; b < cfg.blocks_per_stage[s - 1]; ++b) {
            std::unique_ptr<Block> inner;
            if (cfg.fca_stages.count(s)) {
                inner = std::make_unique<FcaBlock>(ch / 2, cfg.attention_heads, rng);
            } else {
                inner = std::make_unique<BasicPair>(ch / 2, rng);
            }
            blocks.push_back(std::make_unique<CspBlock>(ch, std::move(inner), rng));
        }
        stages.push_back(std::move(blocks));
    }
}

void Hfesnet::visit_children(const ChildVisitor& fn) {
    fn("stem1", stem1);
    fn("stem2", stem2);
    for (size_t i = 0; i < downsamples.size(); ++i)
        fn("down" + std::to_string(i + 2), *downsamples[i]);
    for (size_t s = 0; s < stages.size(); ++s)
        for (size_t b = 0; b < stages[s].size(); ++b)
            fn("stage" + std::to_string(s + 1) + ".block" + std::to_string(b), *stages[s][b]);
}

PyramidFeatures Hfesnet::forward(const FeatureMap& image) const {
    HEGS_CHECK(image.stride == 1, "backbone expects a stride-1 image");
    HEGS_CHECK(image.data.ndim() == 4 && image.data.dim(1) == 3,
               "backbone expects (N,3,H,W), got " << shape_str(image.data.shape()));
    const int64_t H = image.data.dim(2), W = image.data.dim(3);
    HEGS_CHECK(H % 32 == 0 && W % 32 == 0,
               "input " << H << "x" << W << " not divisible by 32; no silent padding");

    Tensor x = stem2.forward(stem1.forward(image.data));

    PyramidFeatures p;
    FeatureMap* outs[4] = {&p.s2, &p.s3, &p.s4, &p.s5};
    int stride = 4;
    for (int s = 1; s <= 4; ++s) {
        if (s > 1) {
            x = downsamples[s - 2]->forward(x);
            stride *= 2;
        }
        for (const auto& blk : stages[s - 1]) x = blk->forward(x);
        check_finite(x, "backbone stage");
        *outs[s - 1] = FeatureMap{x, stride};
    }
    return p;
}

} // namespace nn
} // namespace hegs
