#pragma once

#include "hegs/matcher.hpp"

namespace hegs {

struct LossWeights {
    double cls = 1.0;
    double l1 = 5.0;
    double giou = 2.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
};

// One supervised prediction set (a stage/group pair or the encoder aux head).
struct LossItem {
    int stage = 0;
    std::string group;
    double cls = 0, l1 = 0, giou = 0;  // already weighted
    double weight = 1.0;               // group weight applied into the total
};

struct LossBreakdown {
    Tensor total;  // scalar, on the tape
    std::vector<LossItem> items;

    double classification() const;
    double box_l1() const;
    double giou() const;
    double total_value() const { return total.defined() ? total.item() : 0.0; }
};

// Focal classification over all queries (unmatched = background) plus L1 and
// GIoU on matched boxes, normalized by the total gt count of the batch.
// matches/gts are per image. Returns the scalar loss tensor and its parts.
struct DetectionLoss {
    Tensor total;
    double cls = 0, l1 = 0, giou = 0;
};
DetectionLoss detection_loss(const StagePredictions& preds,
                             const std::vector<GtInstances>& gts,
                             const std::vector<MatchResult>& matches,
                             const LossWeights& w = {});

// Differentiable GIoU loss sum over paired rows of (P,4) cxcywh tensors.
Tensor giou_loss_sum(const Tensor& pred, const Tensor& target);

} // namespace hegs
