#pragma once

#include <array>
#include <vector>

#include "hegs/decoder.hpp"

namespace hegs {

// Ground truth for one image: normalized cxcywh boxes and class ids.
struct GtInstances {
    std::vector<std::array<double, 4>> boxes;
    std::vector<int> labels;

    size_t size() const { return boxes.size(); }
};

struct MatchResult {
    // (query_index, gt_index), injective in both coordinates;
    // |pairs| == min(num_queries, num_gt)
    std::vector<std::pair<int64_t, int64_t>> pairs;
};

struct MatchWeights {
    double cls = 1.0;
    double l1 = 5.0;
    double giou = 2.0;
};

// GIoU of two normalized cxcywh boxes, in (-1, 1].
double giou_cxcywh(const std::array<double, 4>& a, const std::array<double, 4>& b);

// Minimum-cost assignment over a dense (rows x cols) cost matrix. Ties are
// broken deterministically toward lower (row, col) indices via an epsilon
// perturbation that cannot alter optimality on non-degenerate instances.
MatchResult solve_assignment(const std::vector<double>& cost, int64_t rows, int64_t cols);

// Builds cost(q,g) = w_cls*(1 - sigmoid(logit_gclass)) + w_l1*|box_q-box_g|_1
//                  + w_giou*(1 - giou) for one image, then solves it.
// logits/boxes are the (Q,K)/(Q,4) value slices for that image.
MatchResult hungarian_match(const double* logits, const double* boxes, int64_t num_queries,
                            int64_t num_classes, const GtInstances& gt,
                            const MatchWeights& w = {});

} // namespace hegs
