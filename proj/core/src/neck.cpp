#include "hegs/neck.hpp"

#include <cmath>

namespace hegs {

void NeckConfig::validate() const {
    HEGS_CHECK(hidden_dim > 0 && hidden_dim % 2 == 0, "hidden_dim must be even");
    HEGS_CHECK(hidden_dim % aifi_heads == 0, "hidden_dim must divide aifi_heads");
    HEGS_CHECK(large_kernel >= 1 && large_kernel % 2 == 1, "large_kernel must be odd");
    HEGS_CHECK(repblock_depth >= 1, "repblock_depth must be >= 1");
}

namespace nn {

using namespace hegs::ops;

SpdConv::SpdConv(int64_t cin, int64_t cout, Rng& rng) {
    proj = Conv2d(4 * cin, cout, 1, 1, 0, rng);
}

FeatureMap SpdConv::forward(const FeatureMap& x) const {
    Tensor y = proj.forward(spd_rearrange(x.data));
    return {y, x.stride * 2};
}

Tensor sincos_position_2d(int64_t h, int64_t w, int64_t dim, double temperature) {
    HEGS_CHECK(dim % 4 == 0, "2-D sincos position table needs dim divisible by 4");
    const int64_t quarter = dim / 4;
    Tensor out = Tensor::zeros({h * w, dim});
    double* ov = out.data();
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) {
            double* row = ov + (i * w + j) * dim;
            for (int64_t k = 0; k < quarter; ++k) {
                const double omega =
                    1.0 / std::pow(temperature, static_cast<double>(k) / quarter);
                row[2 * k] = std::sin(j * omega);
                row[2 * k + 1] = std::cos(j * omega);
                row[2 * quarter + 2 * k] = std::sin(i * omega);
                row[2 * quarter + 2 * k + 1] = std::cos(i * omega);
            }
        }
    return out;
}

Aifi::Aifi(int64_t dim, int heads, int64_t ffn_dim, Rng& rng) {
    ln1 = LayerNorm(dim);
    attn = MultiheadAttention(dim, heads, rng);
    ln2 = LayerNorm(dim);
    ffn1 = Linear(dim, ffn_dim, rng);
    ffn2 = Linear(ffn_dim, dim, rng);
}

FeatureMap Aifi::forward(const FeatureMap& x, Tensor* attn_out) const {
    const int64_t N = x.data.dim(0), C = x.data.dim(1), H = x.data.dim(2), W = x.data.dim(3);
    Tensor tokens = reshape(permute(x.data, {0, 2, 3, 1}), {N, H * W, C});

    Tensor pos = sincos_position_2d(H, W, C);
    Tensor normed = ln1.forward(tokens);
    Tensor qk = add(normed, pos);
    Tensor attended = attn.forward(qk, qk, normed, Tensor(), attn_out);
    tokens = add(tokens, attended);

    Tensor ff = ffn2.forward(gelu(ffn1.forward(ln2.forward(tokens))));
    tokens = add(tokens, ff);

    Tensor y = permute(reshape(tokens, {N, H, W, C}), {0, 3, 1, 2});
    check_finite(y, "aifi");
    return {y, x.stride};
}

Dcam::Dcam(int64_t channels, Rng& rng) {
    fc1 = Linear(2 * channels, channels, rng);
    fc2 = Linear(channels, channels, rng);
}

Tensor Dcam::forward(const Tensor& x) const {
    const int64_t N = x.dim(0), C = x.dim(1);
    Tensor spatial = global_avg_pool(x);   // (N,C)
    Tensor spectral = freq_mag_mean(x);    // (N,C)
    Tensor stats = concat({spatial, spectral}, 1);
    Tensor gate = sigmoid(fc2.forward(relu(fc1.forward(stats))));
    return mul(x, reshape(gate, {N, C, 1, 1}));
}

Fsam::Fsam(int64_t channels) {
    gate_grid = register_parameter("gate_grid", Tensor::full({channels, 8, 8}, 1.0));
}

Tensor Fsam::forward(const Tensor& x) const { return freq_gate(x, gate_grid); }

OmniKernel::OmniKernel(int64_t channels, int large_kernel, Rng& rng) {
    const int k = large_kernel;
    const int g = static_cast<int>(channels);
    dw_local = Conv2d(channels, channels, 1, 1, 0, rng, g);
    dw_row = Conv2d(channels, channels, 1, k, 1, 0, k / 2, rng, g, true);
    dw_col = Conv2d(channels, channels, k, 1, 1, k / 2, 0, rng, g, true);
    dw_square = Conv2d(channels, channels, k, 1, k / 2, rng, g);
    dcam = Dcam(channels, rng);
    fsam = Fsam(channels);
    proj_out = Conv2d(channels, channels, 1, 1, 0, rng);
}

Tensor OmniKernel::local_branch(const Tensor& x) const { return dw_local.forward(x); }

Tensor OmniKernel::large_branch(const Tensor& x) const {
    return add(add(dw_row.forward(x), dw_col.forward(x)), dw_square.forward(x));
}

Tensor OmniKernel::global_branch(const Tensor& x) const {
    return fsam.forward(dcam.forward(x));
}

Tensor OmniKernel::forward(const Tensor& x) const {
    Tensor sum = add(add(x, local_branch(x)), add(large_branch(x), global_branch(x)));
    return proj_out.forward(sum);
}

FusionBlock::FusionBlock(int64_t cin, int64_t cout, int rep_depth, Rng& rng) {
    conv_main = ConvBNReLU(cin, cout, 1, 1, rng);
    conv_short = ConvBNReLU(cin, cout, 1, 1, rng);
    rep = RepBlock(cout, rep_depth, rng);
    conv_merge = ConvBNReLU(cout, cout, 1, 1, rng);
}

Tensor FusionBlock::forward(const Tensor& x) const {
    Tensor main = rep.forward(conv_main.forward(x));
    Tensor shortcut = conv_short.forward(x);
    return conv_merge.forward(add(main, shortcut));
}

OkFusion::OkFusion(int64_t dim, const NeckConfig& cfg, Rng& rng) {
    if (cfg.use_cokblock) {
        auto omni = std::make_unique<OmniKernel>(dim, cfg.large_kernel, rng);
        cok = std::make_unique<CspBlock>(2 * dim, std::move(omni), rng);
    }
    reduce = ConvBNReLU(2 * dim, dim, 1, 1, rng);
    rep = RepBlock(dim, cfg.repblock_depth, rng);
}

FeatureMap OkFusion::forward(const FeatureMap& s23, const FeatureMap& s45_up) const {
    HEGS_CHECK(s23.data.dim(2) == s45_up.data.dim(2) && s23.data.dim(3) == s45_up.data.dim(3),
               "okfusion inputs must share spatial dims after upsampling: "
                   << shape_str(s23.data.shape()) << " vs " << shape_str(s45_up.data.shape()));
    Tensor cat = concat({s23.data, s45_up.data}, 1);
    Tensor sp = cok ? cok->forward(cat) : cat;
    Tensor base = reduce.forward(sp);
    Tensor y = add(base, rep.forward(base));
    check_finite(y, "okfusion");
    return {y, s23.stride};
}

Esop::Esop(const BackboneConfig& bcfg, const NeckConfig& config, Rng& rng) : cfg(config) {
    cfg.validate();
    const int64_t D = cfg.hidden_dim;
    const int64_t c2 = bcfg.stage_channels[0], c3 = bcfg.stage_channels[1];
    const int64_t c4 = bcfg.stage_channels[2], c5 = bcfg.stage_channels[3];

    spd = SpdConv(c2, D / 2, rng);
    lat3 = Conv2d(c3, D / 2, 1, 1, 0, rng);
    proj5 = ConvBNReLU(c5, D, 1, 1, rng);
    aifi = Aifi(D, cfg.aifi_heads, cfg.aifi_ffn_dim, rng);
    conv_a5 = ConvBNReLU(D, D, 1, 1, rng);
    lat4 = ConvBNReLU(c4, D, 1, 1, rng);
    fuse45 = FusionBlock(2 * D, D, cfg.repblock_depth, rng);
    okf = OkFusion(D, cfg, rng);
    down_a = ConvBNReLU(D, D, 3, 2, rng);
    down_b = ConvBNReLU(D, D, 3, 2, rng);
    fuse16 = FusionBlock(2 * D, D, cfg.repblock_depth, rng);
    fuse32 = FusionBlock(2 * D, D, cfg.repblock_depth, rng);
}

EncoderMemory Esop::forward(PyramidFeatures& p, bool capture_attention) const {
    HEGS_CHECK(p.s2.stride == 4 && p.s3.stride == 8 && p.s4.stride == 16 && p.s5.stride == 32,
               "pyramid strides must be 4/8/16/32");
    const int64_t D = cfg.hidden_dim;

    // shallow composite at stride 8
    FeatureMap s2d = spd.forward(p.s2);
    Tensor s23 = concat({s2d.data, lat3.forward(p.s3.data)}, 1);
    p.s23 = FeatureMap{s23, 8};

    // deep composite: encoded S5 fused into S4 at stride 16
    Tensor attn;
    FeatureMap a5 = aifi.forward({proj5.forward(p.s5.data), 32},
                                 capture_attention ? &attn : nullptr);
    Tensor a5c = conv_a5.forward(a5.data);
    Tensor s45 = fuse45.forward(concat({upsample_nearest2(a5c), lat4.forward(p.s4.data)}, 1));
    p.s45 = FeatureMap{s45, 16};

    FeatureMap s2345 = okf.forward(*p.s23, {upsample_nearest2(s45), 8});
    p.s2345 = s2345;

    // rebuild strides 16 and 32 top-down from the fused stride-8 map
    Tensor p16 = fuse16.forward(concat({down_a.forward(s2345.data), s45}, 1));
    Tensor p32 = fuse32.forward(concat({down_b.forward(p16), a5c}, 1));

    EncoderMemory mem;
    mem.level_strides = {8, 16, 32};
    const Tensor* levels[3] = {&s2345.data, &p16, &p32};
    std::vector<Tensor> token_parts;
    int64_t offset = 0;
    for (const Tensor* lvl : levels) {
        const int64_t N = lvl->dim(0), H = lvl->dim(2), W = lvl->dim(3);
        HEGS_CHECK(lvl->dim(1) == D, "level width " << lvl->dim(1) << " != hidden dim " << D);
        mem.level_shapes.emplace_back(H, W);
        mem.level_start_offsets.push_back(offset);
        offset += H * W;
        token_parts.push_back(reshape(permute(*lvl, {0, 2, 3, 1}), {N, H * W, D}));
    }
    mem.tokens = concat(token_parts, 1);
    if (capture_attention) mem.aifi_attention = attn;
    check_finite(mem.tokens, "esop tokens");
    return mem;
}

} // namespace nn
} // namespace hegs
