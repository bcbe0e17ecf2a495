#include <doctest.h>

#include <numeric>

#include "hegs/data.hpp"
#include "hegs/eval.hpp"
#include "test_util.hpp"

using namespace hegs;

namespace {

Detection det(int64_t img, int cls, double score, std::array<double, 4> xyxy) {
    Detection d;
    d.image_id = img;
    d.cls = cls;
    d.score = score;
    d.box = xyxy;
    return d;
}

EvalGtBox gt(int64_t img, int cls, std::array<double, 4> xyxy) {
    EvalGtBox g;
    g.image_id = img;
    g.cls = cls;
    g.box = xyxy;
    g.area = (xyxy[2] - xyxy[0]) * (xyxy[3] - xyxy[1]);
    return g;
}

StagePredictions preds_from(const std::vector<double>& logits,
                            const std::vector<double>& boxes, int64_t n, int64_t q,
                            int64_t k, int stage) {
    StagePredictions p;
    p.logits = Tensor::from({n, q, k}, logits);
    p.boxes = Tensor::from({n, q, 4}, boxes);
    p.stage_index = stage;
    return p;
}

} // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("perfect predictions score AP = AP50 = 1") {
    std::vector<EvalGtBox> gts{gt(0, 0, {0, 0, 10, 10}), gt(0, 1, {20, 20, 40, 40}),
                               gt(1, 0, {5, 5, 9, 9})};
    std::vector<Detection> dets;
    for (const auto& g : gts) dets.push_back(det(g.image_id, g.cls, 1.0, g.box));
    auto rep = average_precision(dets, gts);
    CHECK(rep.ap.value() == doctest::Approx(1.0));
    CHECK(rep.ap50.value() == doctest::Approx(1.0));
}

TEST_CASE("no predictions score AP = 0") {
    std::vector<EvalGtBox> gts{gt(0, 0, {0, 0, 10, 10})};
    auto rep = average_precision({}, gts);
    CHECK(rep.ap.value() == doctest::Approx(0.0));
}

TEST_CASE("hand-traced fixture: two images, three boxes, one false positive") {
    // detections ranked 0.95 TP / 0.9 FP / 0.8 TP / 0.6 TP over npos = 3:
    //   P/R points (1, 1/3) (0.5, 1/3) (2/3, 2/3) (0.75, 1)
    //   right-envelope precisions: 1, .75, .75, .75
    //   101-pt sum: 34 points at 1.0 (r <= 0.33) + 67 points at 0.75
    //   AP50 = (34 + 50.25) / 101
    std::vector<EvalGtBox> gts{gt(1, 0, {0, 0, 10, 10}), gt(1, 0, {20, 20, 30, 30}),
                               gt(2, 0, {5, 5, 15, 15})};
    std::vector<Detection> dets{det(1, 0, 0.95, {0, 0, 10, 10}),
                                det(1, 0, 0.90, {40, 40, 50, 50}),
                                det(1, 0, 0.80, {20, 20, 30, 30}),
                                det(2, 0, 0.60, {5, 5, 15, 15})};
    auto rep = average_precision(dets, gts);
    const double want = 84.25 / 101.0;
    CHECK(rep.ap50.value() == doctest::Approx(want).epsilon(1e-6));
    // matches are exact-overlap, so every threshold gives the same curve
    CHECK(rep.ap.value() == doctest::Approx(want).epsilon(1e-6));
    CHECK(rep.ap75.value() == doctest::Approx(want).epsilon(1e-6));
    // all gt areas are 100 or 400 px^2: everything is "small"
    CHECK(rep.ap_small.value() == doctest::Approx(want).epsilon(1e-6));
    CHECK_FALSE(rep.ap_medium.has_value());
    CHECK_FALSE(rep.ap_large.has_value());
}

TEST_CASE("classes without ground truth are excluded from the mean") {
    std::vector<EvalGtBox> gts{gt(0, 0, {0, 0, 10, 10})};
    std::vector<Detection> dets{det(0, 0, 0.9, {0, 0, 10, 10}),
                                det(0, 5, 0.99, {50, 50, 60, 60})};  // class 5 has no gt
    auto rep = average_precision(dets, gts);
    CHECK(rep.ap50.value() == doctest::Approx(1.0));
    CHECK(rep.per_class_ap.count(5) == 0);
}

TEST_CASE("stage matchings: identical stages produce identical flags") {
    GtInstances g;
    g.boxes.push_back({0.5, 0.5, 0.2, 0.2});
    g.labels.push_back(0);

    std::vector<double> logits{5.0, -5.0, -5.0,   // q0: class 0, confident
                               -5.0, -5.0, -5.0}; // q1: low everywhere
    std::vector<double> boxes{0.5, 0.5, 0.2, 0.2, 0.9, 0.9, 0.05, 0.05};
    auto s1 = preds_from(logits, boxes, 1, 2, 3, 1);
    auto s2 = preds_from(logits, boxes, 1, 2, 3, 2);
    auto s3 = preds_from(logits, boxes, 1, 2, 3, 3);
    auto flags = stage_matchings({s1, s2, s3}, {g}, 0.5);
    for (int s = 0; s < 3; ++s) {
        CHECK(flags.flags[s][0] == StageFlag::TP);
        CHECK(flags.flags[s][1] == StageFlag::Neither);  // below the score floor
    }
}

TEST_CASE("greedy uniqueness: one gt, two confident queries -> one TP, one FP") {
    GtInstances g;
    g.boxes.push_back({0.5, 0.5, 0.2, 0.2});
    g.labels.push_back(0);
    std::vector<double> logits{3.0, -9, -9, 2.0, -9, -9};
    std::vector<double> boxes{0.5, 0.5, 0.2, 0.2, 0.5, 0.5, 0.21, 0.21};
    auto s = preds_from(logits, boxes, 1, 2, 3, 1);
    auto flags = stage_matchings({s}, {g}, 0.5);
    int tp = 0, fp = 0;
    for (auto f : flags.flags[0]) {
        tp += f == StageFlag::TP;
        fp += f == StageFlag::FP;
    }
    CHECK(tp == 1);
    CHECK(fp == 1);
}

TEST_CASE("fading pattern: early TP dropped by the final stage") {
    GtInstances g;
    g.boxes.push_back({0.5, 0.5, 0.2, 0.2});
    g.labels.push_back(0);
    std::vector<double> good_logits{4.0, -9, -9};
    std::vector<double> good_box{0.5, 0.5, 0.2, 0.2};
    std::vector<double> far_box{0.05, 0.05, 0.04, 0.04};
    auto s1 = preds_from(good_logits, good_box, 1, 1, 3, 1);
    auto s2 = preds_from(good_logits, good_box, 1, 1, 3, 2);
    auto s3 = preds_from(good_logits, far_box, 1, 1, 3, 3);
    auto flags = stage_matchings({s1, s2, s3}, {g}, 0.5);
    CHECK(flags.flags[0][0] == StageFlag::TP);
    CHECK(flags.flags[1][0] == StageFlag::TP);
    CHECK(flags.flags[2][0] == StageFlag::FP);
    CHECK(tp_fading_rate(flags, {1, 2}) == doctest::Approx(1.0));
}

TEST_CASE("tp fading rate counting") {
    StageFlags f;
    f.flags.resize(3);
    f.scores.resize(3);
    // 4 slots TP in the reference union; slot 3 lost at the final stage
    f.flags[0] = {StageFlag::TP, StageFlag::TP, StageFlag::Neither, StageFlag::TP};
    f.flags[1] = {StageFlag::Neither, StageFlag::TP, StageFlag::TP, StageFlag::Neither};
    f.flags[2] = {StageFlag::TP, StageFlag::TP, StageFlag::TP, StageFlag::FP};
    for (auto& s : f.scores) s.assign(4, 0.5);
    CHECK(tp_fading_rate(f, {1, 2}) == doctest::Approx(0.25));
    // all reference TPs kept -> 0
    f.flags[2][3] = StageFlag::TP;
    CHECK(tp_fading_rate(f, {1, 2}) == doctest::Approx(0.0));
}

TEST_CASE("fp exacerbation rate: empty and rising-score cases") {
    StageFlags f;
    f.flags.resize(3);
    f.scores.resize(3);
    f.flags[0] = {StageFlag::FP};
    f.flags[1] = {StageFlag::Neither};
    f.flags[2] = {StageFlag::TP};  // final stage has no FPs
    f.scores[0] = {0.3};
    f.scores[1] = {0.0};
    f.scores[2] = {0.6};
    CHECK(fp_exacerbation_rate(f, {1, 2}) == doctest::Approx(0.0));

    f.flags[2] = {StageFlag::FP};  // single FP whose score rose 0.3 -> 0.6
    CHECK(fp_exacerbation_rate(f, {1, 2}) == doctest::Approx(1.0));

    // score fell instead: the reference error did not persist-or-worsen
    f.scores[0] = {0.9};
    CHECK(fp_exacerbation_rate(f, {1, 2}) == doctest::Approx(0.0));
}

TEST_CASE("fading rates are invariant to a consistent query re-indexing") {
    Rng rng(77);
    StageFlags f;
    f.flags.resize(3);
    f.scores.resize(3);
    const int n = 40;
    for (int s = 0; s < 3; ++s) {
        for (int i = 0; i < n; ++i) {
            const int r = static_cast<int>(rng.uniform_int(0, 2));
            f.flags[s].push_back(r == 0 ? StageFlag::Neither
                                        : (r == 1 ? StageFlag::TP : StageFlag::FP));
            f.scores[s].push_back(rng.uniform(0.05, 1.0));
        }
    }
    const double tp = tp_fading_rate(f, {1, 2});
    const double fp = fp_exacerbation_rate(f, {1, 2});

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    StageFlags g;
    g.flags.resize(3);
    g.scores.resize(3);
    for (int s = 0; s < 3; ++s)
        for (int i = 0; i < n; ++i) {
            g.flags[s].push_back(f.flags[s][perm[i]]);
            g.scores[s].push_back(f.scores[s][perm[i]]);
        }
    CHECK(tp_fading_rate(g, {1, 2}) == doctest::Approx(tp).epsilon(1e-12));
    CHECK(fp_exacerbation_rate(g, {1, 2}) == doctest::Approx(fp).epsilon(1e-12));
}

TEST_CASE("stage matchings reject mismatched query counts") {
    GtInstances g;
    g.boxes.push_back({0.5, 0.5, 0.2, 0.2});
    g.labels.push_back(0);
    auto s1 = preds_from(std::vector<double>(2 * 3, 0.0), std::vector<double>(2 * 4, 0.25),
                         1, 2, 3, 1);
    auto s2 = preds_from(std::vector<double>(3 * 3, 0.0), std::vector<double>(3 * 4, 0.25),
                         1, 3, 3, 2);
    CHECK_THROWS_AS(stage_matchings({s1, s2}, {g}, 0.5), Error);
}

TEST_CASE("attention map aggregation: uniform input gives the uniform map") {
    const int64_t H = 3, W = 4, T = H * W;
    Tensor A = Tensor::full({2, T, T}, 1.0 / T);
    auto map = aifi_attention_map(A, H, W);
    for (double v : map) CHECK(v == doctest::Approx(1.0 / T).epsilon(1e-12));
    double total = 0;
    for (double v : map) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("attention map aggregation: single-head permutation matrix averages flat") {
    const int64_t H = 2, W = 3, T = H * W;
    Tensor A = Tensor::zeros({1, T, T});
    for (int64_t j = 0; j < T; ++j) A.data()[j * T + j] = 1.0;  // identity rows
    auto map = aifi_attention_map(A, H, W);
    for (double v : map) CHECK(v == doctest::Approx(1.0 / T).epsilon(1e-12));
}

TEST_CASE("attention map aggregation is invariant to head and query permutations") {
    Rng rng(9);
    const int64_t H = 2, W = 2, T = 4, heads = 3;
    Tensor A = Tensor::zeros({heads, T, T});
    // random row-stochastic attention
    for (int64_t r = 0; r < heads * T; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < T; ++c) {
            const double v = rng.uniform(0.01, 1.0);
            A.data()[r * T + c] = v;
            sum += v;
        }
        for (int64_t c = 0; c < T; ++c) A.data()[r * T + c] /= sum;
    }
    auto base = aifi_attention_map(A, H, W);

    // permute heads and queries
    std::vector<int> hp{2, 0, 1};
    std::vector<int> qp{3, 1, 0, 2};
    Tensor B = Tensor::zeros({heads, T, T});
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t j = 0; j < T; ++j)
            for (int64_t k = 0; k < T; ++k)
                B.data()[(h * T + j) * T + k] = A.data()[(hp[h] * T + qp[j]) * T + k];
    auto permuted = aifi_attention_map(B, H, W);
    for (int64_t k = 0; k < T; ++k)
        CHECK(permuted[k] == doctest::Approx(base[k]).epsilon(1e-12));
}

TEST_CASE("sampling export: csv schema, coordinate range and row count") {
    DecoderTrace trace;
    CHECK_THROWS_AS(sampling_records_csv(trace, {}), Error);  // not captured

    trace.capture = true;
    SamplingRecord r;
    r.image = 0;
    r.query = 4;
    r.stage = 2;
    r.ref_x = 0.5;
    r.ref_y = 0.25;
    r.x = 0.75;
    r.y = 1.0;
    r.weight = 0.125;
    trace.samples.push_back(r);
    auto csv = sampling_records_csv(trace, {17});
    CHECK(csv.rfind("image_id,query_id,stage,ref_x,ref_y,point_x,point_y,weight\n", 0) == 0);
    CHECK(csv.find("17,4,2,0.5,0.25,0.75,1,0.125") != std::string::npos);
}

TEST_SUITE_END();
