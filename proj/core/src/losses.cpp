#include "hegs/losses.hpp"

namespace hegs {

using namespace hegs::ops;

double LossBreakdown::classification() const {
    double s = 0;
    for (const auto& it : items) s += it.weight * it.cls;
    return s;
}

double LossBreakdown::box_l1() const {
    double s = 0;
    for (const auto& it : items) s += it.weight * it.l1;
    return s;
}

double LossBreakdown::giou() const {
    double s = 0;
    for (const auto& it : items) s += it.weight * it.giou;
    return s;
}

Tensor giou_loss_sum(const Tensor& pred, const Tensor& target) {
    HEGS_CHECK(pred.ndim() == 2 && pred.dim(1) == 4, "giou_loss expects (P,4)");
    HEGS_CHECK(pred.shape() == target.shape(), "giou_loss shape mismatch");
    auto cx = [&](const Tensor& t) { return narrow(t, 1, 0, 1); };
    auto cy = [&](const Tensor& t) { return narrow(t, 1, 1, 1); };
    auto w = [&](const Tensor& t) { return narrow(t, 1, 2, 1); };
    auto h = [&](const Tensor& t) { return narrow(t, 1, 3, 1); };

    auto corners = [&](const Tensor& t) {
        Tensor half_w = mul_scalar(w(t), 0.5);
        Tensor half_h = mul_scalar(h(t), 0.5);
        return std::array<Tensor, 4>{sub(cx(t), half_w), sub(cy(t), half_h),
                                     add(cx(t), half_w), add(cy(t), half_h)};
    };
    auto [px1, py1, px2, py2] = corners(pred);
    auto [tx1, ty1, tx2, ty2] = corners(target);

    const double big = 1e30;
    Tensor iw = clamp(sub(minimum(px2, tx2), maximum(px1, tx1)), 0.0, big);
    Tensor ih = clamp(sub(minimum(py2, ty2), maximum(py1, ty1)), 0.0, big);
    Tensor inter = mul(iw, ih);
    Tensor area_p = mul(w(pred), h(pred));
    Tensor area_t = mul(w(target), h(target));
    Tensor uni = sub(add(area_p, area_t), inter);
    Tensor iou = div(inter, add_scalar(uni, 1e-12));

    Tensor cw = sub(maximum(px2, tx2), minimum(px1, tx1));
    Tensor ch = sub(maximum(py2, ty2), minimum(py1, ty1));
    Tensor closure = add_scalar(mul(cw, ch), 1e-12);
    Tensor giou = sub(iou, div(sub(closure, uni), closure));
    return sum_all(sub(Tensor::full(giou.shape(), 1.0), giou));
}

DetectionLoss detection_loss(const StagePredictions& preds,
                             const std::vector<GtInstances>& gts,
                             const std::vector<MatchResult>& matches, const LossWeights& w) {
    const int64_t N = preds.logits.dim(0), Q = preds.logits.dim(1), K = preds.logits.dim(2);
    HEGS_CHECK(gts.size() == static_cast<size_t>(N) && matches.size() == static_cast<size_t>(N),
               "detection_loss batch mismatch");

    int64_t num_gt = 0;
    for (const auto& g : gts) num_gt += static_cast<int64_t>(g.size());
    const double norm = 1.0 / std::max<int64_t>(1, num_gt);

    // one-hot targets; matched queries carry their gt class, the rest stay
    // background (all-zero rows)
    Tensor target = Tensor::zeros({N, Q, K});
    double* tv = target.data();
    for (int64_t n = 0; n < N; ++n)
        for (const auto& [q, g] : matches[n].pairs) {
            HEGS_CHECK(q >= 0 && q < Q, "match query index out of range");
            tv[(n * Q + q) * K + gts[n].labels[g]] = 1.0;
        }

    // focal terms, overflow-safe: log(p) = -softplus(-z), log(1-p) = -softplus(z)
    const Tensor& z = preds.logits;
    Tensor p = sigmoid(z);
    Tensor one_minus_p = add_scalar(neg(p), 1.0);
    Tensor log_p = neg(softplus(neg(z)));
    Tensor log_1p = neg(softplus(z));
    Tensor pos = mul(target, mul(pow_scalar(one_minus_p, w.focal_gamma), log_p));
    Tensor negt = mul(sub(Tensor::full(target.shape(), 1.0), target),
                      mul(pow_scalar(p, w.focal_gamma), log_1p));
    Tensor cls_sum = neg(add(mul_scalar(sum_all(pos), w.focal_alpha),
                             mul_scalar(sum_all(negt), 1.0 - w.focal_alpha)));
    Tensor cls_loss = mul_scalar(cls_sum, w.cls * norm);

    DetectionLoss out;
    if (num_gt > 0) {
        // matched predicted boxes, flattened across the batch
        std::vector<Tensor> pred_rows;
        std::vector<double> gt_flat;
        for (int64_t n = 0; n < N; ++n) {
            if (matches[n].pairs.empty()) continue;
            std::vector<std::vector<int64_t>> idx{{}};
            for (const auto& [q, g] : matches[n].pairs) {
                idx[0].push_back(q);
                for (int k = 0; k < 4; ++k) gt_flat.push_back(gts[n].boxes[g][k]);
            }
            Tensor img_boxes = narrow(preds.boxes, 0, n, 1);  // (1,Q,4)
            Tensor sel = gather_rows(img_boxes, idx);         // (1,P,4)
            pred_rows.push_back(reshape(sel, {static_cast<int64_t>(idx[0].size()), 4}));
        }
        Tensor pred_boxes = pred_rows.size() == 1 ? pred_rows[0] : concat(pred_rows, 0);
        const int64_t P = pred_boxes.dim(0);
        Tensor gt_boxes = Tensor::from({P, 4}, gt_flat);

        Tensor l1 = mul_scalar(sum_all(abs(sub(pred_boxes, gt_boxes))), w.l1 * norm);
        Tensor gi = mul_scalar(giou_loss_sum(pred_boxes, gt_boxes), w.giou * norm);
        out.l1 = l1.item();
        out.giou = gi.item();
        out.total = add(cls_loss, add(l1, gi));
    } else {
        out.total = cls_loss;
    }
    out.cls = cls_loss.item();
    return out;
}

} // namespace hegs
