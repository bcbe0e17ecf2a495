#include "hegs/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hegs {

double giou_cxcywh(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    const double ax1 = a[0] - a[2] / 2, ay1 = a[1] - a[3] / 2;
    const double ax2 = a[0] + a[2] / 2, ay2 = a[1] + a[3] / 2;
    const double bx1 = b[0] - b[2] / 2, by1 = b[1] - b[3] / 2;
    const double bx2 = b[0] + b[2] / 2, by2 = b[1] + b[3] / 2;

    const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
    const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
    const double inter = iw * ih;
    const double area_a = std::max(0.0, ax2 - ax1) * std::max(0.0, ay2 - ay1);
    const double area_b = std::max(0.0, bx2 - bx1) * std::max(0.0, by2 - by1);
    const double uni = area_a + area_b - inter;
    const double iou = uni > 0 ? inter / uni : 0.0;

    const double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
    const double ch = std::max(ay2, by2) - std::min(ay1, by1);
    const double closure = cw * ch;
    return closure > 0 ? iou - (closure - uni) / closure : iou;
}

namespace {

// Jonker-Volgenant style shortest augmenting path assignment, rows <= cols.
// Returns col index per row.
std::vector<int64_t> jv_assign(const std::vector<double>& cost, int64_t n, int64_t m) {
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(m + 1, 0);
    std::vector<int64_t> p(m + 1, 0), way(m + 1, 0);  // p[j]: row matched to col j
    for (int64_t i = 1; i <= n; ++i) {
        p[0] = i;
        int64_t j0 = 0;
        std::vector<double> minv(m + 1, INF);
        std::vector<char> used(m + 1, false);
        do {
            used[j0] = true;
            const int64_t i0 = p[j0];
            double delta = INF;
            int64_t j1 = 0;
            for (int64_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int64_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int64_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int64_t> row_to_col(n, -1);
    for (int64_t j = 1; j <= m; ++j)
        if (p[j] >= 1 && p[j] <= n) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace

MatchResult solve_assignment(const std::vector<double>& cost, int64_t rows, int64_t cols) {
    MatchResult res;
    if (rows == 0 || cols == 0) return res;
    HEGS_CHECK(static_cast<int64_t>(cost.size()) == rows * cols, "cost matrix size mismatch");

    double max_abs = 0;
    for (double c : cost) max_abs = std::max(max_abs, std::fabs(c));
    // lexicographic tiebreaker, far below any meaningful cost difference
    const double eps = (1.0 + max_abs) * 1e-12 / static_cast<double>(rows * cols + 1);

    const bool transposed = rows > cols;
    const int64_t n = transposed ? cols : rows;
    const int64_t m = transposed ? rows : cols;
    std::vector<double> c(n * m);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t col = 0; col < cols; ++col) {
            const double tie = eps * static_cast<double>(r * cols + col);
            if (transposed)
                c[col * m + r] = cost[r * cols + col] + tie;
            else
                c[r * m + col] = cost[r * cols + col] + tie;
        }

    auto row_to_col = jv_assign(c, n, m);
    for (int64_t i = 0; i < n; ++i) {
        if (row_to_col[i] < 0) continue;
        if (transposed)
            res.pairs.emplace_back(row_to_col[i], i);
        else
            res.pairs.emplace_back(i, row_to_col[i]);
    }
    std::sort(res.pairs.begin(), res.pairs.end());
    return res;
}

MatchResult hungarian_match(const double* logits, const double* boxes, int64_t num_queries,
                            int64_t num_classes, const GtInstances& gt,
                            const MatchWeights& w) {
    const int64_t G = static_cast<int64_t>(gt.size());
    if (G == 0) return {};
    HEGS_CHECK(w.cls > 0 && w.l1 > 0 && w.giou > 0, "match cost weights must be positive");

    std::vector<double> cost(num_queries * G);
    for (int64_t q = 0; q < num_queries; ++q) {
        const std::array<double, 4> bq{boxes[q * 4], boxes[q * 4 + 1], boxes[q * 4 + 2],
                                       boxes[q * 4 + 3]};
        for (int64_t g = 0; g < G; ++g) {
            const int cls = gt.labels[g];
            HEGS_CHECK(cls >= 0 && cls < num_classes, "gt label " << cls << " out of range");
            const double z = logits[q * num_classes + cls];
            const double score = 1.0 / (1.0 + std::exp(-z));
            double l1 = 0;
            for (int k = 0; k < 4; ++k) l1 += std::fabs(bq[k] - gt.boxes[g][k]);
            cost[q * G + g] = w.cls * (1.0 - score) + w.l1 * l1 +
                              w.giou * (1.0 - giou_cxcywh(bq, gt.boxes[g]));
        }
    }
    return solve_assignment(cost, num_queries, G);
}

} // namespace hegs
