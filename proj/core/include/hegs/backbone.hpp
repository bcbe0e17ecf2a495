#pragma once

#include <memory>
#include <optional>
#include <set>

#include "hegs/nn.hpp"

namespace hegs {

// Dense image/feature tensor plus its downsampling factor wrt the input image.
struct FeatureMap {
    Tensor data;    // (N,C,H,W)
    int stride = 1;
};

struct BackboneConfig {
    int64_t stem_channels = 16;
    std::vector<int64_t> stage_channels{32, 64, 128, 256};
    std::vector<int> blocks_per_stage{1, 1, 1, 1};
    std::set<int> fca_stages{3, 4};  // 1-based stage indices
    int attention_heads = 4;

    void validate() const;
};

struct PyramidFeatures {
    FeatureMap s2, s3, s4, s5;  // strides 4/8/16/32
    std::optional<FeatureMap> s23, s45, s2345;
};

namespace nn {

// Hook for blocks pluggable into the CSP half-channel path.
class Block : public Module {
public:
    virtual Tensor forward(const Tensor& x) const = 0;
};

// y = x + ReLU(BN(Conv3x3(x)))
class ResidualUnit : public Block {
public:
    ResidualUnit() = default;
    ResidualUnit(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    ConvBNReLU body;

protected:
    void visit_children(const ChildVisitor& fn) override { fn("body", body); }
};

// Two residual units on the half-channel path.
class BasicPair : public Block {
public:
    BasicPair() = default;
    BasicPair(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    ResidualUnit u1, u2;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("u1", u1);
        fn("u2", u2);
    }
};

// Squeeze-excite style channel gate.
class ChannelGate : public Block {
public:
    ChannelGate() = default;
    ChannelGate(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const override;  // returns gated x

    Linear fc1, fc2;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("fc1", fc1);
        fn("fc2", fc2);
    }
};

// Spatial self-attention + channel gate + learnable frequency gate, fused by
// learned per-branch scalars and a final 1x1 projection. The final projection
// is the zero-init target that turns the enclosing residual into identity.
class Sfa : public Block {
public:
    Sfa() = default;
    Sfa(int64_t channels, int heads, Rng& rng);
    Tensor forward(const Tensor& x) const override;
    // Same forward, optionally exposing the (N,heads,HW,HW) attention tensor.
    Tensor forward_traced(const Tensor& x, Tensor* attn) const;

    MultiheadAttention attn;
    ChannelGate channel;
    Tensor freq_gate_grid;   // (C, 8, 8), ones at init
    Tensor branch_weights;   // (3): spatial, channel, frequency
    Conv2d proj_out;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("attn", attn);
        fn("channel", channel);
        fn("proj_out", proj_out);
    }
};

// Low/high frequency split feed-forward: 3x3 blur low-pass, residual
// high-pass enhanced by depthwise conv + pointwise sigmoid gate.
class Dffn : public Block {
public:
    Dffn() = default;
    Dffn(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    Conv2d dw, pw_gate, proj_out;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("dw", dw);
        fn("pw_gate", pw_gate);
        fn("proj_out", proj_out);
    }
};

// Pre-norm cascade: x1 = SFA(LN(x)) + x; y = DFFN(LN(x1)) + x1.
class FcaBlock : public Block {
public:
    FcaBlock() = default;
    FcaBlock(int64_t channels, int heads, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    LayerNorm ln1, ln2;
    Sfa sfa;
    Dffn dffn;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("ln1", ln1);
        fn("sfa", sfa);
        fn("ln2", ln2);
        fn("dffn", dffn);
    }
};

// Channel split/transform/merge wrapper: a 1x1 conv, half the channels pass
// through untouched, the other half through `inner`, then concat + 1x1 conv.
class CspBlock : public Module {
public:
    CspBlock() = default;
    CspBlock(int64_t channels, std::unique_ptr<Block> inner, Rng& rng);
    Tensor forward(const Tensor& x) const;

    Conv2d conv_in, conv_out;
    std::unique_ptr<Block> inner;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("conv_in", conv_in);
        fn("inner", *inner);
        fn("conv_out", conv_out);
    }
};

// Layer-norm over the channel axis of an NCHW map, applied per position.
Tensor layer_norm_nchw(const Tensor& x, const LayerNorm& ln);

// Writes identity weights into a 1x1 conv (used by tests and ablations).
void set_identity_1x1(Conv2d& conv);

class Hfesnet : public Module {
public:
    Hfesnet() = default;
    Hfesnet(const BackboneConfig& cfg, Rng& rng);

    // image must be stride 1, 3 channels, spatial dims divisible by 32
    PyramidFeatures forward(const FeatureMap& image) const;

    BackboneConfig cfg;
    ConvBNReLU stem1, stem2;
    std::vector<std::unique_ptr<ConvBNReLU>> downsamples;  // stages 2..4
    std::vector<std::vector<std::unique_ptr<CspBlock>>> stages;

protected:
    void visit_children(const ChildVisitor& fn) override;
};

} // namespace nn
} // namespace hegs
