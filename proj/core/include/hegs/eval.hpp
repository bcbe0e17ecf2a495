#pragma once

#include <map>
#include <optional>

#include "hegs/sqr.hpp"

namespace hegs {

// Detections and ground truth in absolute pixel xyxy, the native currency of
// the COCO protocol.
struct Detection {
    int64_t image_id = 0;
    int cls = 0;
    double score = 0;
    std::array<double, 4> box{};  // x1,y1,x2,y2 pixels
};

struct EvalGtBox {
    int64_t image_id = 0;
    int cls = 0;
    std::array<double, 4> box{};
    double area = 0;  // native pixel area
};

struct APReport {
    std::optional<double> ap, ap50, ap75;          // IoU .50:.95, .50, .75
    std::optional<double> ap_small, ap_medium, ap_large;
    std::map<int, double> per_class_ap;

    std::string to_json() const;
};

// COCO protocol: per-class score-sorted greedy matching at each threshold,
// 101-point interpolated precision, area-range filtering with ignore
// semantics, 100 detections per image. Classes without ground truth are
// excluded from every mean.
APReport average_precision(const std::vector<Detection>& dets,
                           const std::vector<EvalGtBox>& gts,
                           const std::vector<double>& iou_thresholds = {},
                           int max_dets_per_image = 100);

// ---- stage-fading diagnostics ----

enum class StageFlag : uint8_t { Neither = 0, TP = 1, FP = 2 };

// flags[stage][i]: verdict of query slot i (flattened over images) at that
// stage; scores[stage][i]: its max-class probability.
struct StageFlags {
    std::vector<std::vector<StageFlag>> flags;   // [stage][slot]
    std::vector<std::vector<double>> scores;     // [stage][slot]
};

// Per-stage TP/FP verdicts for predictions sharing the query indexing.
// A query is TP when score-sorted greedy matching at IoU>tau assigns it a gt
// of its predicted class and its score exceeds the floor; FP when it exceeds
// the floor and is not TP.
StageFlags stage_matchings(const std::vector<StagePredictions>& stage_preds,
                           const std::vector<GtInstances>& gts, double tau,
                           double score_floor = 0.05);

// Fraction of slots that are TP in ANY reference stage but not TP at the
// final stage. reference holds 1-based stage indices (subset of {1,2}).
double tp_fading_rate(const StageFlags& s, const std::vector<int>& reference);

// Among final-stage FPs, the fraction that were already FP in some reference
// stage with a score <= the final score (the error persisted or worsened).
double fp_exacerbation_rate(const StageFlags& s, const std::vector<int>& reference);

struct FadingReport {
    double tau = 0;
    std::string reference;  // "1", "2" or "1&2"
    double tp_f_rate = 0;
    double fp_e_rate = 0;
};

// ---- attention-map aggregation ----

// A: (heads, HW, HW) row-stochastic; averages heads then the query axis and
// reshapes to (H, W).
std::vector<double> aifi_attention_map(const Tensor& A, int64_t H, int64_t W);

// ---- sampling-record export ----

// CSV with header image_id,query_id,stage,ref_x,ref_y,point_x,point_y,weight.
// Throws if the trace was not captured.
std::string sampling_records_csv(const DecoderTrace& trace,
                                 const std::vector<int64_t>& image_ids);

// ---- post-processing ----

// Top-k over the flattened (Q x K) sigmoid scores of the final stage.
std::vector<Detection> postprocess_topk(const StagePredictions& preds, int64_t image_index,
                                        int64_t image_id, int64_t image_size, int k = 100);

// ---- flat binary tensor blob (little-endian, documented in the README) ----
void write_tensor_blob(const std::string& path, const Shape& shape,
                       const std::vector<double>& data);
std::pair<Shape, std::vector<double>> read_tensor_blob(const std::string& path);

} // namespace hegs
