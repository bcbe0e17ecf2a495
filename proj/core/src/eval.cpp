#include "hegs/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace hegs {

namespace {

double iou_xyxy(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    const double iw = std::max(0.0, std::min(a[2], b[2]) - std::max(a[0], b[0]));
    const double ih = std::max(0.0, std::min(a[3], b[3]) - std::max(a[1], b[1]));
    const double inter = iw * ih;
    const double ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    return ua > 0 ? inter / ua : 0.0;
}

struct AreaRange {
    double lo, hi;
};

// 101-point interpolated AP for one (class, threshold, area range):
// detections already sorted by descending score across images.
// Returns nullopt when the class has no ground truth in range... npos==0.
std::optional<double> ap_single(const std::vector<char>& is_tp,
                                const std::vector<char>& ignore_det, int64_t npos) {
    if (npos == 0) return std::nullopt;
    std::vector<double> precision, recall;
    int64_t tp = 0, fp = 0;
    for (size_t i = 0; i < is_tp.size(); ++i) {
        if (ignore_det[i]) continue;
        if (is_tp[i]) ++tp; else ++fp;
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / npos);
    }
    // envelope from the right, then sample 101 recall points
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0;
    for (int r = 0; r <= 100; ++r) {
        const double target = r / 100.0;
        // first index with recall >= target
        auto it = std::lower_bound(recall.begin(), recall.end(), target);
        if (it != recall.end()) ap += precision[it - recall.begin()];
    }
    return ap / 101.0;
}

} // namespace

APReport average_precision(const std::vector<Detection>& dets_in,
                           const std::vector<EvalGtBox>& gts,
                           const std::vector<double>& thresholds_in, int max_dets_per_image) {
    std::vector<double> thresholds = thresholds_in;
    if (thresholds.empty())
        for (int i = 0; i < 10; ++i) thresholds.push_back(0.5 + 0.05 * i);

    // cap detections per image by score (COCO maxDets)
    std::vector<Detection> dets = dets_in;
    {
        std::map<int64_t, std::vector<size_t>> per_img;
        for (size_t i = 0; i < dets.size(); ++i) per_img[dets[i].image_id].push_back(i);
        std::vector<char> keep(dets.size(), 1);
        for (auto& [img, idx] : per_img) {
            if (static_cast<int>(idx.size()) <= max_dets_per_image) continue;
            std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
                return dets[a].score > dets[b].score;
            });
            for (size_t k = max_dets_per_image; k < idx.size(); ++k) keep[idx[k]] = 0;
        }
        std::vector<Detection> filtered;
        for (size_t i = 0; i < dets.size(); ++i)
            if (keep[i]) filtered.push_back(dets[i]);
        dets.swap(filtered);
    }

    std::vector<int> classes;
    for (const auto& g : gts)
        if (std::find(classes.begin(), classes.end(), g.cls) == classes.end())
            classes.push_back(g.cls);
    std::sort(classes.begin(), classes.end());

    const AreaRange kAll{0.0, 1e10};
    const AreaRange kSmall{0.0, 32.0 * 32.0};
    const AreaRange kMedium{32.0 * 32.0, 96.0 * 96.0};
    const AreaRange kLarge{96.0 * 96.0, 1e10};

    // evaluate(class, threshold, range) -> optional AP
    auto eval_cell = [&](int cls, double tau, const AreaRange& range) -> std::optional<double> {
        // group per image
        std::map<int64_t, std::vector<const EvalGtBox*>> gt_by_img;
        for (const auto& g : gts)
            if (g.cls == cls) gt_by_img[g.image_id].push_back(&g);
        std::map<int64_t, std::vector<size_t>> det_by_img;
        for (size_t i = 0; i < dets.size(); ++i)
            if (dets[i].cls == cls) det_by_img[dets[i].image_id].push_back(i);

        struct ScoredDet {
            double score;
            char tp, ignore;
        };
        std::vector<ScoredDet> all;
        int64_t npos = 0;

        std::vector<int64_t> images;
        for (auto& [img, v] : gt_by_img) images.push_back(img);
        for (auto& [img, v] : det_by_img)
            if (!gt_by_img.count(img)) images.push_back(img);
        std::sort(images.begin(), images.end());

        for (int64_t img : images) {
            auto git = gt_by_img.find(img);
            std::vector<const EvalGtBox*> g =
                git != gt_by_img.end() ? git->second : std::vector<const EvalGtBox*>{};
            // gts outside the range are "ignored": matching them neither
            // scores nor penalizes
            std::vector<char> gt_ignore(g.size());
            for (size_t i = 0; i < g.size(); ++i)
                gt_ignore[i] = g[i]->area < range.lo || g[i]->area >= range.hi;
            // non-ignored first, stable within groups
            std::vector<size_t> gorder(g.size());
            std::iota(gorder.begin(), gorder.end(), size_t{0});
            std::stable_sort(gorder.begin(), gorder.end(),
                             [&](size_t a, size_t b) { return gt_ignore[a] < gt_ignore[b]; });
            for (size_t i = 0; i < g.size(); ++i)
                if (!gt_ignore[i]) ++npos;

            auto dit = det_by_img.find(img);
            if (dit == det_by_img.end()) continue;
            std::vector<size_t> dorder = dit->second;
            std::stable_sort(dorder.begin(), dorder.end(), [&](size_t a, size_t b) {
                return dets[a].score > dets[b].score;
            });

            std::vector<char> gt_used(g.size(), 0);
            for (size_t di : dorder) {
                const auto& d = dets[di];
                int best = -1;
                double best_iou = tau;
                for (size_t oi = 0; oi < gorder.size(); ++oi) {
                    const size_t gi = gorder[oi];
                    if (gt_used[gi]) continue;
                    // once a real match exists, do not trade it for an
                    // ignored gt (they sort last)
                    if (best >= 0 && !gt_ignore[static_cast<size_t>(best)] && gt_ignore[gi])
                        break;
                    const double iou = iou_xyxy(d.box, g[gi]->box);
                    if (iou >= best_iou) {
                        best_iou = iou;
                        best = static_cast<int>(gi);
                    }
                }
                ScoredDet sd{d.score, 0, 0};
                if (best >= 0) {
                    gt_used[best] = 1;
                    if (gt_ignore[best]) {
                        sd.ignore = 1;  // matched an out-of-range gt
                    } else {
                        sd.tp = 1;
                    }
                } else {
                    const double area = (d.box[2] - d.box[0]) * (d.box[3] - d.box[1]);
                    if (area < range.lo || area >= range.hi) sd.ignore = 1;
                }
                all.push_back(sd);
            }
        }
        std::stable_sort(all.begin(), all.end(),
                         [](const ScoredDet& a, const ScoredDet& b) { return a.score > b.score; });
        std::vector<char> is_tp, ignore;
        for (const auto& sd : all) {
            is_tp.push_back(sd.tp);
            ignore.push_back(sd.ignore);
        }
        return ap_single(is_tp, ignore, npos);
    };

    auto mean_over = [&](const std::vector<double>& taus,
                         const AreaRange& range) -> std::optional<double> {
        double sum = 0;
        int64_t count = 0;
        for (int cls : classes)
            for (double tau : taus) {
                auto ap = eval_cell(cls, tau, range);
                if (ap) {
                    sum += *ap;
                    ++count;
                }
            }
        if (count == 0) return std::nullopt;
        return sum / count;
    };

    APReport rep;
    rep.ap = mean_over(thresholds, kAll);
    rep.ap50 = mean_over({0.5}, kAll);
    rep.ap75 = mean_over({0.75}, kAll);
    rep.ap_small = mean_over(thresholds, kSmall);
    rep.ap_medium = mean_over(thresholds, kMedium);
    rep.ap_large = mean_over(thresholds, kLarge);
    for (int cls : classes) {
        double sum = 0;
        int64_t count = 0;
        for (double tau : thresholds) {
            auto ap = eval_cell(cls, tau, kAll);
            if (ap) {
                sum += *ap;
                ++count;
            }
        }
        if (count > 0) rep.per_class_ap[cls] = sum / count;
    }
    return rep;
}

std::string APReport::to_json() const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v; else j[key] = nullptr;
    };
    put("ap", ap);
    put("ap50", ap50);
    put("ap75", ap75);
    put("ap_small", ap_small);
    put("ap_medium", ap_medium);
    put("ap_large", ap_large);
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [cls, v] : per_class_ap) pc[std::to_string(cls)] = v;
    j["per_class_ap"] = pc;
    return j.dump(2);
}

StageFlags stage_matchings(const std::vector<StagePredictions>& stage_preds,
                           const std::vector<GtInstances>& gts, double tau,
                           double score_floor) {
    HEGS_CHECK(!stage_preds.empty(), "no stages to analyze");
    const int64_t N = stage_preds[0].logits.dim(0);
    const int64_t Q = stage_preds[0].logits.dim(1);
    const int64_t K = stage_preds[0].logits.dim(2);
    for (const auto& sp : stage_preds)
        HEGS_CHECK(sp.logits.dim(0) == N && sp.logits.dim(1) == Q,
                   "stages must share query indexing; got "
                       << shape_str(sp.logits.shape()));
    HEGS_CHECK(gts.size() == static_cast<size_t>(N), "gt batch mismatch");

    StageFlags out;
    out.flags.resize(stage_preds.size());
    out.scores.resize(stage_preds.size());

    for (size_t s = 0; s < stage_preds.size(); ++s) {
        const auto& sp = stage_preds[s];
        out.flags[s].assign(N * Q, StageFlag::Neither);
        out.scores[s].assign(N * Q, 0.0);
        const double* lv = sp.logits.data();
        const double* bv = sp.boxes.data();
        for (int64_t n = 0; n < N; ++n) {
            // per-query predicted class and score
            std::vector<int> cls(Q);
            std::vector<double> score(Q);
            for (int64_t q = 0; q < Q; ++q) {
                double best = -1e300;
                int bk = 0;
                for (int64_t k = 0; k < K; ++k) {
                    const double z = lv[(n * Q + q) * K + k];
                    if (z > best) { best = z; bk = static_cast<int>(k); }
                }
                cls[q] = bk;
                score[q] = 1.0 / (1.0 + std::exp(-best));
                out.scores[s][n * Q + q] = score[q];
            }
            std::vector<int64_t> order(Q);
            std::iota(order.begin(), order.end(), int64_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](int64_t a, int64_t b) { return score[a] > score[b]; });

            std::vector<char> gt_used(gts[n].size(), 0);
            for (int64_t q : order) {
                if (score[q] <= score_floor) continue;
                const std::array<double, 4> bq{bv[(n * Q + q) * 4], bv[(n * Q + q) * 4 + 1],
                                               bv[(n * Q + q) * 4 + 2],
                                               bv[(n * Q + q) * 4 + 3]};
                int best_g = -1;
                double best_iou = tau;
                for (size_t g = 0; g < gts[n].size(); ++g) {
                    if (gt_used[g] || gts[n].labels[g] != cls[q]) continue;
                    // cxcywh IoU via shared helper (giou >= iou equality when
                    // boxes overlap is not needed here; compute plain IoU)
                    const auto& gb = gts[n].boxes[g];
                    const double ax1 = bq[0] - bq[2] / 2, ay1 = bq[1] - bq[3] / 2;
                    const double ax2 = bq[0] + bq[2] / 2, ay2 = bq[1] + bq[3] / 2;
                    const double bx1 = gb[0] - gb[2] / 2, by1 = gb[1] - gb[3] / 2;
                    const double bx2 = gb[0] + gb[2] / 2, by2 = gb[1] + gb[3] / 2;
                    const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
                    const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
                    const double inter = iw * ih;
                    const double uni =
                        (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
                    const double iou = uni > 0 ? inter / uni : 0.0;
                    if (iou > best_iou) {
                        best_iou = iou;
                        best_g = static_cast<int>(g);
                    }
                }
                if (best_g >= 0) {
                    gt_used[best_g] = 1;
                    out.flags[s][n * Q + q] = StageFlag::TP;
                } else {
                    out.flags[s][n * Q + q] = StageFlag::FP;
                }
            }
        }
    }
    return out;
}

double tp_fading_rate(const StageFlags& s, const std::vector<int>& reference) {
    HEGS_CHECK(!reference.empty(), "reference stage set must not be empty");
    const size_t last = s.flags.size() - 1;
    int64_t ref_tp = 0, faded = 0;
    for (size_t i = 0; i < s.flags[last].size(); ++i) {
        bool tp_any = false;
        for (int r : reference) {
            HEGS_CHECK(r >= 1 && static_cast<size_t>(r) <= last,
                       "reference stage " << r << " out of range");
            tp_any = tp_any || s.flags[r - 1][i] == StageFlag::TP;
        }
        if (!tp_any) continue;
        ++ref_tp;
        if (s.flags[last][i] != StageFlag::TP) ++faded;
    }
    return ref_tp == 0 ? 0.0 : static_cast<double>(faded) / ref_tp;
}

double fp_exacerbation_rate(const StageFlags& s, const std::vector<int>& reference) {
    HEGS_CHECK(!reference.empty(), "reference stage set must not be empty");
    const size_t last = s.flags.size() - 1;
    int64_t final_fp = 0, persisted = 0;
    for (size_t i = 0; i < s.flags[last].size(); ++i) {
        if (s.flags[last][i] != StageFlag::FP) continue;
        ++final_fp;
        const double final_score = s.scores[last][i];
        for (int r : reference) {
            if (s.flags[r - 1][i] == StageFlag::FP && s.scores[r - 1][i] <= final_score) {
                ++persisted;
                break;
            }
        }
    }
    return final_fp == 0 ? 0.0 : static_cast<double>(persisted) / final_fp;
}

std::vector<double> aifi_attention_map(const Tensor& A, int64_t H, int64_t W) {
    HEGS_CHECK(A.ndim() == 3, "attention tensor must be (heads, HW, HW)");
    const int64_t heads = A.dim(0), T = A.dim(1);
    HEGS_CHECK(A.dim(2) == T && T == H * W,
               "attention shape " << shape_str(A.shape()) << " does not match " << H << "x" << W);
    std::vector<double> map(static_cast<size_t>(T), 0.0);
    const double* av = A.data();
    for (int64_t h = 0; h < heads; ++h)
        for (int64_t j = 0; j < T; ++j)
            for (int64_t k = 0; k < T; ++k) map[k] += av[(h * T + j) * T + k];
    const double inv = 1.0 / (static_cast<double>(heads) * T);
    for (auto& v : map) v *= inv;
    return map;
}

std::string sampling_records_csv(const DecoderTrace& trace,
                                 const std::vector<int64_t>& image_ids) {
    HEGS_CHECK(trace.capture, "sampling trace was not captured; rerun with tracing enabled");
    std::ostringstream oss;
    oss << "image_id,query_id,stage,ref_x,ref_y,point_x,point_y,weight\n";
    oss.precision(17);
    for (const auto& r : trace.samples) {
        const int64_t img =
            r.image < static_cast<int64_t>(image_ids.size()) ? image_ids[r.image] : r.image;
        oss << img << "," << r.query << "," << r.stage << "," << r.ref_x << "," << r.ref_y
            << "," << r.x << "," << r.y << "," << r.weight << "\n";
    }
    return oss.str();
}

std::vector<Detection> postprocess_topk(const StagePredictions& preds, int64_t image_index,
                                        int64_t image_id, int64_t image_size, int k) {
    const int64_t Q = preds.logits.dim(1), K = preds.logits.dim(2);
    const double* lv = preds.logits.data() + image_index * Q * K;
    const double* bv = preds.boxes.data() + image_index * Q * 4;

    std::vector<std::pair<double, int64_t>> flat;  // (score, q*K+k)
    flat.reserve(Q * K);
    for (int64_t q = 0; q < Q; ++q)
        for (int64_t c = 0; c < K; ++c)
            flat.emplace_back(1.0 / (1.0 + std::exp(-lv[q * K + c])), q * K + c);
    std::stable_sort(flat.begin(), flat.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    if (static_cast<int64_t>(flat.size()) > k) flat.resize(k);

    std::vector<Detection> out;
    for (const auto& [score, qc] : flat) {
        const int64_t q = qc / K;
        Detection d;
        d.image_id = image_id;
        d.cls = static_cast<int>(qc % K);
        d.score = score;
        const double cx = bv[q * 4] * image_size, cy = bv[q * 4 + 1] * image_size;
        const double w = bv[q * 4 + 2] * image_size, h = bv[q * 4 + 3] * image_size;
        d.box = {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
        out.push_back(d);
    }
    return out;
}

void write_tensor_blob(const std::string& path, const Shape& shape,
                       const std::vector<double>& data) {
    HEGS_CHECK(shape_numel(shape) == static_cast<int64_t>(data.size()),
               "tensor blob size mismatch");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    HEGS_CHECK(out.good(), "cannot write " << path);
    out.write("HGTEN01\n", 8);
    const uint32_t nd = static_cast<uint32_t>(shape.size());
    out.write(reinterpret_cast<const char*>(&nd), 4);
    for (int64_t d : shape) out.write(reinterpret_cast<const char*>(&d), 8);
    out.write(reinterpret_cast<const char*>(data.data()), data.size() * 8);
}

std::pair<Shape, std::vector<double>> read_tensor_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    HEGS_CHECK(in.good(), "cannot open " << path);
    char magic[8];
    in.read(magic, 8);
    HEGS_CHECK(std::memcmp(magic, "HGTEN01\n", 8) == 0, "bad tensor blob magic in " << path);
    uint32_t nd = 0;
    in.read(reinterpret_cast<char*>(&nd), 4);
    Shape shape(nd);
    for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), 8);
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(data.data()), data.size() * 8);
    HEGS_CHECK(in.good(), "truncated tensor blob " << path);
    return {shape, data};
}

} // namespace hegs
