#include <doctest.h>

#include "hegs/backbone.hpp"
#include "test_util.hpp"

using namespace hegs;
using hegs_test::fill_random;
using hegs_test::gradcheck;

namespace {

struct IdBlock : nn::Block {
    Tensor forward(const Tensor& x) const override { return x; }
};

// Straight-line transcription of the split/transform/merge wiring with raw
// loops, independent of the module plumbing; the inner transform is reused
// as a black box.
Tensor csp_straightline(const nn::CspBlock& blk, const Tensor& x) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto conv1x1 = [&](const Tensor& in, const Tensor& w, const Tensor& b) {
        const int64_t Ci = in.dim(1), Co = w.dim(0);
        Tensor out = Tensor::zeros({N, Co, H, W});
        for (int64_t n = 0; n < N; ++n)
            for (int64_t co = 0; co < Co; ++co)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t xx = 0; xx < W; ++xx) {
                        double acc = b.defined() ? b.data()[co] : 0.0;
                        for (int64_t ci = 0; ci < Ci; ++ci)
                            acc += w.data()[co * Ci + ci] *
                                   in.data()[((n * Ci + ci) * H + y) * W + xx];
                        out.data()[((n * Co + co) * H + y) * W + xx] = acc;
                    }
        return out;
    };

    Tensor xp = conv1x1(x, blk.conv_in.weight, blk.conv_in.bias);
    // split along channels
    Tensor x1 = Tensor::zeros({N, C / 2, H, W});
    Tensor x2 = Tensor::zeros({N, C / 2, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C / 2; ++c)
            for (int64_t i = 0; i < H * W; ++i) {
                x1.data()[(n * (C / 2) + c) * H * W + i] =
                    xp.data()[(n * C + c) * H * W + i];
                x2.data()[(n * (C / 2) + c) * H * W + i] =
                    xp.data()[(n * C + C / 2 + c) * H * W + i];
            }
    Tensor y2 = blk.inner->forward(x2);
    Tensor cat = Tensor::zeros({N, C, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C / 2; ++c)
            for (int64_t i = 0; i < H * W; ++i) {
                cat.data()[(n * C + c) * H * W + i] =
                    x1.data()[(n * (C / 2) + c) * H * W + i];
                cat.data()[(n * C + C / 2 + c) * H * W + i] =
                    y2.data()[(n * (C / 2) + c) * H * W + i];
            }
    return conv1x1(cat, blk.conv_out.weight, blk.conv_out.bias);
}

} // namespace

TEST_SUITE_BEGIN("backbone");

TEST_CASE("csp with identity pieces is the identity map") {
    Rng rng(1);
    nn::CspBlock blk(8, std::make_unique<IdBlock>(), rng);
    nn::set_identity_1x1(blk.conv_in);
    nn::set_identity_1x1(blk.conv_out);
    Tensor x = Tensor::zeros({2, 8, 5, 5});
    fill_random(x, rng);
    CHECK(hegs_test::bitwise_equal(blk.forward(x), x));
}

TEST_CASE("csp preserves shape") {
    Rng rng(2);
    nn::CspBlock blk(64, std::make_unique<nn::BasicPair>(32, rng), rng);
    blk.set_training(false);
    Tensor x = Tensor::zeros({1, 64, 16, 16});
    fill_random(x, rng);
    CHECK(blk.forward(x).shape() == Shape{1, 64, 16, 16});
}

TEST_CASE("csp rejects odd channel counts and shape-changing inner transforms") {
    Rng rng(3);
    CHECK_THROWS_AS(nn::CspBlock(7, std::make_unique<IdBlock>(), rng), Error);

    struct Widen : nn::Block {
        Tensor forward(const Tensor& x) const override {
            return ops::concat({x, x}, 1);
        }
    };
    nn::CspBlock blk(8, std::make_unique<Widen>(), rng);
    Tensor x = Tensor::zeros({1, 8, 4, 4});
    CHECK_THROWS_AS(blk.forward(x), Error);
}

TEST_CASE("csp-fca matches the straight-line transcription") {
    Rng rng(4);
    nn::CspBlock blk(16, std::make_unique<nn::FcaBlock>(8, 2, rng), rng);
    blk.set_training(false);
    Tensor x = Tensor::zeros({1, 16, 6, 6});
    fill_random(x, rng);
    Tensor got = blk.forward(x);
    Tensor want = csp_straightline(blk, x);
    CHECK(hegs_test::max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("fca: zero-initialized projections make it a residual pass-through") {
    Rng rng(5);
    nn::FcaBlock fca(8, 2, rng);
    nn::zero_(fca.sfa.proj_out.weight);
    nn::zero_(fca.sfa.proj_out.bias);
    nn::zero_(fca.dffn.proj_out.weight);
    nn::zero_(fca.dffn.proj_out.bias);
    Tensor x = Tensor::zeros({1, 8, 4, 4});
    fill_random(x, rng);
    CHECK(hegs_test::bitwise_equal(fca.forward(x), x));
}

TEST_CASE("fca preserves shape") {
    Rng rng(6);
    nn::FcaBlock fca(32, 4, rng);
    Tensor x = Tensor::zeros({2, 32, 8, 8});
    fill_random(x, rng);
    CHECK(fca.forward(x).shape() == Shape{2, 32, 8, 8});
}

TEST_CASE("fca gradient matches central finite differences") {
    Rng rng(7);
    nn::FcaBlock fca(8, 2, rng);
    Tensor x = Tensor::zeros({1, 8, 4, 4});
    fill_random(x, rng);
    CHECK(gradcheck(x.clone(), [&](const Tensor& t) { return fca.forward(t); }) < 1e-3);
}

TEST_CASE("sfa: uniform attention degenerates to the mean value projection") {
    Rng rng(8);
    nn::Sfa sfa(6, 1, rng);
    // zero q/k -> uniform rows; identity output projections isolate the
    // spatial branch
    nn::zero_(sfa.attn.wq.weight);
    nn::zero_(sfa.attn.wq.bias);
    nn::zero_(sfa.attn.wk.weight);
    nn::zero_(sfa.attn.wk.bias);
    nn::zero_(sfa.attn.wo.weight);
    for (int64_t i = 0; i < 6; ++i) sfa.attn.wo.weight.values()[i * 6 + i] = 1.0;
    nn::zero_(sfa.attn.wo.bias);
    nn::set_identity_1x1(sfa.proj_out);
    sfa.branch_weights.values() = {1.0, 0.0, 0.0};

    Tensor x = Tensor::zeros({1, 6, 3, 3});
    fill_random(x, rng);
    Tensor y = sfa.forward(x);

    // expected: per-channel mean over tokens of V = Wv * token + bv
    Tensor tokens = ops::reshape(ops::permute(x, {0, 2, 3, 1}), {1, 9, 6});
    Tensor v = sfa.attn.wv.forward(tokens);
    std::array<double, 6> mean{};
    for (int64_t t = 0; t < 9; ++t)
        for (int64_t c = 0; c < 6; ++c) mean[c] += v.data()[t * 6 + c] / 9.0;
    for (int64_t c = 0; c < 6; ++c)
        for (int64_t i = 0; i < 9; ++i)
            CHECK(y.data()[c * 9 + i] == doctest::Approx(mean[c]).epsilon(1e-9));
}

TEST_CASE("sfa attention rows sum to one") {
    Rng rng(9);
    nn::Sfa sfa(16, 4, rng);
    Tensor x = Tensor::zeros({1, 16, 8, 8});
    fill_random(x, rng);
    Tensor attn;
    sfa.forward_traced(x, &attn);
    const int64_t T = 64;
    for (int64_t r = 0; r < attn.numel() / T; ++r) {
        double s = 0;
        for (int64_t c = 0; c < T; ++c) s += attn.data()[r * T + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("frequency branch of sfa keeps real output for any gate") {
    Rng rng(10);
    Tensor x = Tensor::zeros({1, 4, 6, 6});
    fill_random(x, rng);
    Tensor gate = Tensor::zeros({4, 8, 8});
    hegs_test::fill_uniform(gate, rng, -1.5, 1.5);  // deliberately asymmetric
    CHECK(ops::freq_gate_imag_residue(x, gate) < 1e-6);
}

TEST_CASE("dffn decomposition: constant input has zero high band") {
    Tensor x = Tensor::full({1, 3, 5, 7}, 0.73);
    Tensor high = ops::sub(x, ops::avg_blur3(x));
    for (double v : high.values()) CHECK(v == 0.0);
}

TEST_CASE("dffn low/high split is exactly complementary") {
    Rng rng(11);
    Tensor x = Tensor::zeros({2, 3, 6, 6});
    fill_random(x, rng);
    Tensor low = ops::avg_blur3(x);
    Tensor high = ops::sub(x, low);
    CHECK(hegs_test::max_abs_diff(ops::add(low, high), x) < 1e-12);  // 1 ulp of rounding
}

TEST_CASE("dffn gradient matches central finite differences") {
    Rng rng(12);
    nn::Dffn dffn(8, rng);
    Tensor x = Tensor::zeros({1, 8, 4, 4});
    fill_random(x, rng);
    CHECK(gradcheck(x.clone(), [&](const Tensor& t) { return dffn.forward(t); }) < 1e-3);
}

TEST_CASE("backbone emits the expected pyramid shapes") {
    Rng rng(13);
    BackboneConfig cfg;  // desk defaults: 32/64/128/256
    nn::Hfesnet net(cfg, rng);
    net.set_training(false);
    Tensor img = Tensor::zeros({1, 3, 128, 128});
    fill_random(img, rng, 0.3);
    auto p = net.forward({img, 1});
    CHECK(p.s2.data.shape() == Shape{1, 32, 32, 32});
    CHECK(p.s3.data.shape() == Shape{1, 64, 16, 16});
    CHECK(p.s4.data.shape() == Shape{1, 128, 8, 8});
    CHECK(p.s5.data.shape() == Shape{1, 256, 4, 4});
    CHECK(p.s2.stride == 4);
    CHECK(p.s5.stride == 32);
}

TEST_CASE("backbone at the full operating resolution") {
    Rng rng(14);
    BackboneConfig cfg;
    cfg.stage_channels = {8, 16, 32, 64};
    cfg.stem_channels = 8;
    cfg.attention_heads = 2;
    nn::Hfesnet net(cfg, rng);
    net.set_training(false);
    Tensor img = Tensor::zeros({1, 3, 640, 640});
    auto p = net.forward({img, 1});
    CHECK(p.s5.data.dim(2) == 20);
    CHECK(p.s5.data.dim(3) == 20);
}

TEST_CASE("backbone rejects inputs not divisible by 32") {
    Rng rng(15);
    BackboneConfig cfg;
    nn::Hfesnet net(cfg, rng);
    Tensor img = Tensor::zeros({1, 3, 100, 100});
    CHECK_THROWS_AS(net.forward({img, 1}), Error);
}

TEST_CASE("csp halves the parameter count against a plain residual trunk") {
    Rng rng(16);
    BackboneConfig cfg;
    cfg.fca_stages = {};  // plain comparison: both trunks use conv blocks only
    nn::Hfesnet csp_net(cfg, rng);

    // same-depth trunk without the channel split: two full-width residual
    // units per stage
    struct PlainStage : nn::Module {
        nn::ResidualUnit u1, u2;
        PlainStage(int64_t ch, Rng& r) {
            u1 = nn::ResidualUnit(ch, r);
            u2 = nn::ResidualUnit(ch, r);
        }
        void visit_children(const ChildVisitor& fn) override {
            fn("u1", u1);
            fn("u2", u2);
        }
    };
    struct PlainNet : nn::Module {
        nn::ConvBNReLU stem1, stem2;
        std::vector<std::unique_ptr<nn::ConvBNReLU>> downs;
        std::vector<std::unique_ptr<PlainStage>> stages;
        PlainNet(const BackboneConfig& cfg, Rng& r) {
            stem1 = nn::ConvBNReLU(3, cfg.stem_channels, 3, 2, r);
            stem2 = nn::ConvBNReLU(cfg.stem_channels, cfg.stage_channels[0], 3, 2, r);
            for (int s = 1; s <= 4; ++s) {
                if (s > 1)
                    downs.push_back(std::make_unique<nn::ConvBNReLU>(
                        cfg.stage_channels[s - 2], cfg.stage_channels[s - 1], 3, 2, r));
                stages.push_back(std::make_unique<PlainStage>(cfg.stage_channels[s - 1], r));
            }
        }
        void visit_children(const ChildVisitor& fn) override {
            fn("stem1", stem1);
            fn("stem2", stem2);
            for (size_t i = 0; i < downs.size(); ++i) fn("d" + std::to_string(i), *downs[i]);
            for (size_t i = 0; i < stages.size(); ++i) fn("s" + std::to_string(i), *stages[i]);
        }
    };
    PlainNet plain(cfg, rng);
    CHECK(csp_net.parameter_count() < plain.parameter_count());
}

TEST_CASE("backbone forward is deterministic for a fixed seed") {
    BackboneConfig cfg;
    cfg.stage_channels = {8, 16, 32, 64};
    cfg.stem_channels = 8;
    cfg.attention_heads = 2;
    Tensor img = Tensor::zeros({1, 3, 64, 64});
    Rng drng(55);
    fill_random(img, drng, 0.5);

    auto run = [&]() {
        Rng rng(99);
        nn::Hfesnet net(cfg, rng);
        net.set_training(false);
        return net.forward({img, 1});
    };
    auto a = run();
    auto b = run();
    CHECK(hegs_test::bitwise_equal(a.s5.data, b.s5.data));
}

TEST_SUITE_END();
