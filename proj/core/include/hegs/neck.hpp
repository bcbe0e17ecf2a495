#pragma once

#include "hegs/backbone.hpp"

namespace hegs {

struct NeckConfig {
    int64_t hidden_dim = 64;  // D, the decoder token width
    int aifi_heads = 4;
    int64_t aifi_ffn_dim = 256;
    int large_kernel = 31;  // odd; shrink when feature maps are small
    int repblock_depth = 2;
    bool use_cokblock = true;  // false drops the pre-fusion mixer (ablation)

    void validate() const;
};

// Flattened multi-scale encoder output consumed by the decoder.
struct EncoderMemory {
    Tensor tokens;  // (N, sum_i Hi*Wi, D)
    std::vector<std::pair<int64_t, int64_t>> level_shapes;
    std::vector<int64_t> level_start_offsets;
    std::vector<int> level_strides;
    Tensor aifi_attention;  // (N, heads, HW, HW), detached; captured on request

    int64_t token_count() const { return tokens.defined() ? tokens.dim(1) : 0; }
};

namespace nn {

// Lossless 2x downsample: space-to-depth then a 1x1 conv to set channels.
class SpdConv : public Module {
public:
    SpdConv() = default;
    SpdConv(int64_t cin, int64_t cout, Rng& rng);
    FeatureMap forward(const FeatureMap& x) const;

    Conv2d proj;  // on 4*cin channels

protected:
    void visit_children(const ChildVisitor& fn) override { fn("proj", proj); }
};

// Single pre-norm transformer encoder layer over the flattened deepest level,
// with fixed 2-D sincos positions added to q/k.
class Aifi : public Module {
public:
    Aifi() = default;
    Aifi(int64_t dim, int heads, int64_t ffn_dim, Rng& rng);
    // attn_out: optional capture of the (N,heads,HW,HW) attention tensor.
    FeatureMap forward(const FeatureMap& x, Tensor* attn_out = nullptr) const;

    LayerNorm ln1, ln2;
    MultiheadAttention attn;
    Linear ffn1, ffn2;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("ln1", ln1);
        fn("attn", attn);
        fn("ln2", ln2);
        fn("ffn1", ffn1);
        fn("ffn2", ffn2);
    }
};

// Fixed 2-D sinusoidal position table, (H*W, dim).
Tensor sincos_position_2d(int64_t h, int64_t w, int64_t dim, double temperature = 10000.0);

// Channel gate driven by concatenated spatial GAP and spectral magnitude
// statistics.
class Dcam : public Block {
public:
    Dcam() = default;
    Dcam(int64_t channels, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    Linear fc1, fc2;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("fc1", fc1);
        fn("fc2", fc2);
    }
};

// Learnable per-frequency magnitude gate (identity at init).
class Fsam : public Block {
public:
    Fsam() = default;
    explicit Fsam(int64_t channels);
    Tensor forward(const Tensor& x) const override;

    Tensor gate_grid;  // (C,8,8)
};

// Local (depthwise 1x1) + large (strip and square depthwise kernels) +
// global (DCAM then FSAM) branches summed with the input, then a 1x1 conv.
class OmniKernel : public Block {
public:
    OmniKernel() = default;
    OmniKernel(int64_t channels, int large_kernel, Rng& rng);
    Tensor forward(const Tensor& x) const override;

    Tensor local_branch(const Tensor& x) const;
    Tensor large_branch(const Tensor& x) const;
    Tensor global_branch(const Tensor& x) const;

    Conv2d dw_local, dw_row, dw_col, dw_square;
    Dcam dcam;
    Fsam fsam;
    Conv2d proj_out;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("dw_local", dw_local);
        fn("dw_row", dw_row);
        fn("dw_col", dw_col);
        fn("dw_square", dw_square);
        fn("dcam", dcam);
        fn("fsam", fsam);
        fn("proj_out", proj_out);
    }
};

// Cross-scale fusion block in the baseline hybrid-encoder style: two 1x1
// lateral convs, a RepBlock trunk, and a merge conv.
class FusionBlock : public Module {
public:
    FusionBlock() = default;
    FusionBlock(int64_t cin, int64_t cout, int rep_depth, Rng& rng);
    Tensor forward(const Tensor& x) const;

    ConvBNReLU conv_main, conv_short, conv_merge;
    RepBlock rep;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("conv_main", conv_main);
        fn("conv_short", conv_short);
        fn("rep", rep);
        fn("conv_merge", conv_merge);
    }
};

// Pre-fusion of the shallow/deep composites: S' = COKBlock(cat(S23, S45)),
// S2345 = Conv(S') + RepBlock(Conv(S')).
class OkFusion : public Module {
public:
    OkFusion() = default;
    OkFusion(int64_t dim, const NeckConfig& cfg, Rng& rng);
    FeatureMap forward(const FeatureMap& s23, const FeatureMap& s45_up) const;

    std::unique_ptr<CspBlock> cok;  // null when the pre-fusion mixer is ablated
    ConvBNReLU reduce;
    RepBlock rep;

protected:
    void visit_children(const ChildVisitor& fn) override {
        if (cok) fn("cok", *cok);
        fn("reduce", reduce);
        fn("rep", rep);
    }
};

class Esop : public Module {
public:
    Esop() = default;
    Esop(const BackboneConfig& bcfg, const NeckConfig& cfg, Rng& rng);

    // Consumes S2..S5 and emits three flattened levels at strides 8/16/32.
    // capture_attention stores the AIFI attention tensor in the result.
    EncoderMemory forward(PyramidFeatures& p, bool capture_attention = false) const;

    NeckConfig cfg;
    SpdConv spd;          // S2 -> D/2 at stride 8
    Conv2d lat3;          // S3 -> D/2
    ConvBNReLU proj5;     // S5 -> D
    Aifi aifi;
    ConvBNReLU conv_a5;   // post-encoder 1x1
    ConvBNReLU lat4;      // S4 -> D
    FusionBlock fuse45;   // cat(A5 up, S4) -> S45
    OkFusion okf;
    ConvBNReLU down_a, down_b;  // stride-2 rebuilds
    FusionBlock fuse16, fuse32;

protected:
    void visit_children(const ChildVisitor& fn) override {
        fn("spd", spd);
        fn("lat3", lat3);
        fn("proj5", proj5);
        fn("aifi", aifi);
        fn("conv_a5", conv_a5);
        fn("lat4", lat4);
        fn("fuse45", fuse45);
        fn("okf", okf);
        fn("down_a", down_a);
        fn("down_b", down_b);
        fn("fuse16", fuse16);
        fn("fuse32", fuse32);
    }
};

} // namespace nn
} // namespace hegs
