#include <doctest.h>

#include "hegs/neck.hpp"
#include "test_util.hpp"

using namespace hegs;
using hegs_test::fill_random;
using hegs_test::gradcheck;

TEST_SUITE_BEGIN("neck");

TEST_CASE("spd rearrangement: pinned sub-grid order") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});  // [[a,b],[c,d]]
    Tensor y = ops::spd_rearrange(x);
    CHECK(y.shape() == Shape{1, 4, 1, 1});
    CHECK(y.values() == std::vector<double>{1, 2, 3, 4});  // (a,b,c,d)
}

TEST_CASE("spd rearrangement is a bitwise bijection") {
    Rng rng(1);
    Tensor x = Tensor::zeros({2, 3, 8, 8});
    fill_random(x, rng);
    CHECK(hegs_test::bitwise_equal(ops::spd_inverse(ops::spd_rearrange(x)), x));

    Tensor big = Tensor::zeros({1, 32, 32, 32});
    fill_random(big, rng);
    CHECK(ops::spd_rearrange(big).shape() == Shape{1, 128, 16, 16});
}

TEST_CASE("spd rejects odd spatial dims") {
    Tensor x = Tensor::zeros({1, 1, 3, 4});
    CHECK_THROWS_AS(ops::spd_rearrange(x), Error);
}

TEST_CASE("spd_conv with identity projection equals the raw rearrangement") {
    Rng rng(2);
    nn::SpdConv spd(2, 8, rng);
    nn::set_identity_1x1(spd.proj);
    Tensor x = Tensor::zeros({1, 2, 6, 6});
    fill_random(x, rng);
    FeatureMap out = spd.forward({x, 4});
    CHECK(hegs_test::bitwise_equal(out.data, ops::spd_rearrange(x)));
    CHECK(out.stride == 8);
}

TEST_CASE("spd_conv shape rule and gradient") {
    Rng rng(3);
    nn::SpdConv spd(32, 64, rng);
    Tensor x = Tensor::zeros({1, 32, 32, 32});
    fill_random(x, rng, 0.5);
    FeatureMap out = spd.forward({x, 4});
    CHECK(out.data.shape() == Shape{1, 64, 16, 16});
    CHECK(out.stride == 8);

    nn::SpdConv small(2, 4, rng);
    Tensor xs = Tensor::zeros({1, 2, 4, 4});
    fill_random(xs, rng);
    CHECK(gradcheck(xs.clone(), [&](const Tensor& t) {
        return small.forward({t, 4}).data;
    }) < 1e-3);
}

TEST_CASE("aifi: attention rows sum to one and the trace has the right shape") {
    Rng rng(4);
    nn::Aifi aifi(16, 2, 32, rng);
    Tensor x = Tensor::zeros({1, 16, 4, 4});
    fill_random(x, rng);
    Tensor attn;
    aifi.forward({x, 32}, &attn);
    CHECK(attn.shape() == Shape{1, 2, 16, 16});
    for (int64_t r = 0; r < 2 * 16; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 16; ++c) s += attn.data()[r * 16 + c];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("aifi with zero output projections is the identity") {
    Rng rng(5);
    nn::Aifi aifi(16, 2, 32, rng);
    nn::zero_(aifi.attn.wo.weight);
    nn::zero_(aifi.attn.wo.bias);
    nn::zero_(aifi.ffn2.weight);
    nn::zero_(aifi.ffn2.bias);
    Tensor x = Tensor::zeros({2, 16, 4, 4});
    fill_random(x, rng);
    CHECK(hegs_test::bitwise_equal(aifi.forward({x, 32}).data, x));
}

TEST_CASE("omni kernel: zero branches + identity projection = identity") {
    Rng rng(6);
    nn::OmniKernel omni(8, 7, rng);
    nn::zero_(omni.dw_local.weight);
    nn::zero_(omni.dw_local.bias);
    nn::zero_(omni.dw_row.weight);
    nn::zero_(omni.dw_row.bias);
    nn::zero_(omni.dw_col.weight);
    nn::zero_(omni.dw_col.bias);
    nn::zero_(omni.dw_square.weight);
    nn::zero_(omni.dw_square.bias);
    nn::zero_(omni.fsam.gate_grid);  // global branch output becomes zero
    nn::set_identity_1x1(omni.proj_out);
    Tensor x = Tensor::zeros({1, 8, 5, 5});
    fill_random(x, rng);
    CHECK(hegs_test::max_abs_diff(omni.forward(x), x) < 1e-9);
}

TEST_CASE("omni kernel keeps shape with 31x31 kernels on an 8x8 input") {
    Rng rng(7);
    nn::OmniKernel omni(16, 31, rng);
    Tensor x = Tensor::zeros({1, 16, 8, 8});
    fill_random(x, rng);
    CHECK(omni.forward(x).shape() == Shape{1, 16, 8, 8});
}

TEST_CASE("omni kernel equals the sum of separately computed branches") {
    Rng rng(8);
    nn::OmniKernel omni(8, 7, rng);
    Tensor x = Tensor::zeros({1, 8, 6, 6});
    fill_random(x, rng);
    Tensor sum = ops::add(ops::add(x, omni.local_branch(x)),
                          ops::add(omni.large_branch(x), omni.global_branch(x)));
    Tensor want = omni.proj_out.forward(sum);
    CHECK(hegs_test::max_abs_diff(omni.forward(x), want) < 1e-6);
}

TEST_CASE("dcam saturates to identity with a large gate bias") {
    Rng rng(9);
    nn::Dcam dcam(4, rng);
    nn::zero_(dcam.fc2.weight);
    nn::fill_(dcam.fc2.bias, 40.0);  // sigmoid(40) ~ 1
    Tensor x = Tensor::zeros({1, 4, 5, 5});
    fill_random(x, rng);
    CHECK(hegs_test::max_abs_diff(dcam.forward(x), x) < 1e-4);
}

TEST_CASE("fsam with an all-ones gate is the identity and stays real") {
    Rng rng(10);
    nn::Fsam fsam(4);
    Tensor x = Tensor::zeros({1, 4, 6, 6});
    fill_random(x, rng);
    CHECK(hegs_test::max_abs_diff(fsam.forward(x), x) < 1e-6);
    CHECK(ops::freq_gate_imag_residue(x, fsam.gate_grid) < 1e-6);
}

TEST_CASE("okfusion shapes and the zero-RepBlock degenerate form") {
    Rng rng(11);
    NeckConfig ncfg;
    ncfg.hidden_dim = 64;
    ncfg.large_kernel = 7;
    nn::OkFusion okf(64, ncfg, rng);
    okf.set_training(false);
    Tensor a = Tensor::zeros({1, 64, 16, 16});
    Tensor b = Tensor::zeros({1, 64, 16, 16});
    fill_random(a, rng, 0.5);
    fill_random(b, rng, 0.5);
    FeatureMap out = okf.forward({a, 8}, {b, 8});
    CHECK(out.data.shape() == Shape{1, 64, 16, 16});
    CHECK(out.stride == 8);

    // zero the RepBlock: output reduces to the shared conv branch
    for (auto& unit : okf.rep.units) {
        nn::zero_(unit->conv.weight);
        nn::zero_(unit->bn.beta);
    }
    Tensor cat = ops::concat({a, b}, 1);
    Tensor sp = okf.cok->forward(cat);
    Tensor base = okf.reduce.forward(sp);
    CHECK(hegs_test::max_abs_diff(okf.forward({a, 8}, {b, 8}).data, base) < 1e-12);
}

TEST_CASE("okfusion matches a straight-line transcription of the fusion rule") {
    Rng rng(12);
    NeckConfig ncfg;
    ncfg.hidden_dim = 16;
    ncfg.large_kernel = 7;
    nn::OkFusion okf(16, ncfg, rng);
    okf.set_training(false);
    Tensor a = Tensor::zeros({1, 16, 8, 8});
    Tensor b = Tensor::zeros({1, 16, 8, 8});
    fill_random(a, rng, 0.5);
    fill_random(b, rng, 0.5);

    Tensor sp = okf.cok->forward(ops::concat({a, b}, 1));
    Tensor base = okf.reduce.forward(sp);
    Tensor want = ops::add(base, okf.rep.forward(base));
    CHECK(hegs_test::max_abs_diff(okf.forward({a, 8}, {b, 8}).data, want) < 1e-6);
}

TEST_CASE("okfusion rejects mismatched spatial sizes") {
    Rng rng(13);
    NeckConfig ncfg;
    ncfg.hidden_dim = 16;
    ncfg.large_kernel = 7;
    nn::OkFusion okf(16, ncfg, rng);
    Tensor a = Tensor::zeros({1, 16, 8, 8});
    Tensor b = Tensor::zeros({1, 16, 4, 4});
    CHECK_THROWS_AS(okf.forward({a, 8}, {b, 8}), Error);
}

namespace {

EncoderMemory run_neck(bool use_cok, Tensor* attn_out = nullptr) {
    Rng rng(14);
    BackboneConfig bcfg;  // 32/64/128/256
    NeckConfig ncfg;
    ncfg.hidden_dim = 64;
    ncfg.large_kernel = 7;
    ncfg.use_cokblock = use_cok;
    nn::Hfesnet backbone(bcfg, rng);
    nn::Esop neck(bcfg, ncfg, rng);
    backbone.set_training(false);
    neck.set_training(false);

    Rng drng(15);
    Tensor img = Tensor::zeros({1, 3, 128, 128});
    fill_random(img, drng, 0.3);
    auto p = backbone.forward({img, 1});
    auto mem = neck.forward(p, attn_out != nullptr);
    if (attn_out) *attn_out = mem.aifi_attention;
    return mem;
}

} // namespace

TEST_CASE("esop token layout for a 128px input") {
    Tensor attn;
    auto mem = run_neck(true, &attn);
    CHECK(mem.tokens.shape() == Shape{1, 336, 64});
    CHECK(mem.level_shapes ==
          std::vector<std::pair<int64_t, int64_t>>{{16, 16}, {8, 8}, {4, 4}});
    CHECK(mem.level_start_offsets == std::vector<int64_t>{0, 256, 320});
    CHECK(mem.level_strides == std::vector<int>{8, 16, 32});
    CHECK(attn.shape() == Shape{1, 4, 16, 16});
}

TEST_CASE("esop ablation hook: dropping the pre-fusion mixer still runs and differs") {
    auto with = run_neck(true);
    auto without = run_neck(false);
    CHECK(with.tokens.shape() == without.tokens.shape());
    CHECK(hegs_test::max_abs_diff(with.tokens, without.tokens) > 1e-9);
}

TEST_CASE("esop pyramid carries the fused slots with documented strides") {
    Rng rng(16);
    BackboneConfig bcfg;
    NeckConfig ncfg;
    ncfg.hidden_dim = 64;
    ncfg.large_kernel = 7;
    nn::Hfesnet backbone(bcfg, rng);
    nn::Esop neck(bcfg, ncfg, rng);
    backbone.set_training(false);
    neck.set_training(false);
    Tensor img = Tensor::zeros({1, 3, 128, 128});
    auto p = backbone.forward({img, 1});
    neck.forward(p);
    REQUIRE(p.s23.has_value());
    REQUIRE(p.s45.has_value());
    REQUIRE(p.s2345.has_value());
    CHECK(p.s23->stride == 8);
    CHECK(p.s45->stride == 16);
    CHECK(p.s2345->stride == 8);
}

TEST_SUITE_END();
