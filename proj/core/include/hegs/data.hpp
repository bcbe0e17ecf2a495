#pragma once

#include <string>

#include "hegs/matcher.hpp"

namespace hegs {

// One training/eval example. Images are stored standardized: raw [0,1]
// channel values mapped through (v - 0.5) / 0.5.
struct DetectionSample {
    Tensor image;  // (3,H,W)
    GtInstances gt;
    int64_t image_id = 0;
    int64_t width = 0, height = 0;  // native pixel size
};

struct SyntheticSceneConfig {
    int image_size = 128;
    int num_objects_min = 4, num_objects_max = 12;
    int object_px_min = 6, object_px_max = 16;
    int num_classes = 3;  // shapes: rectangle / ellipse / cross / bars
    double clutter_density = 0.3;
    double occlusion_prob = 0.2;
    uint64_t seed = 0;

    void validate() const;
};

// Deterministic function of (cfg.seed, index).
DetectionSample generate_synthetic_scene(const SyntheticSceneConfig& cfg, int64_t index);

// Raw variant keeping the pre-standardization image and the object-free
// background render, for generator soundness checks.
struct SyntheticRaw {
    std::vector<double> image;       // (3,S,S) in [0,1]
    std::vector<double> background;  // same layout, before objects/clutter
    DetectionSample sample;
};
SyntheticRaw generate_synthetic_scene_raw(const SyntheticSceneConfig& cfg, int64_t index);

// ---- COCO-format ingestion ----

struct CocoLoadOptions {
    bool strict = false;         // escalate per-record rejections to an error
    bool check_files = true;     // verify referenced image files exist
};

struct CocoImageEntry {
    int64_t id = 0;
    std::string file_name;  // resolved relative to the annotation file
    int64_t width = 0, height = 0;
    GtInstances gt;  // normalized cxcywh, contiguous labels
};

struct CocoDataset {
    std::vector<CocoImageEntry> images;
    std::vector<int64_t> category_ids;  // original ids, index = contiguous label
    int64_t num_classes = 0;
    std::vector<std::string> errors;  // per-record rejections (lenient mode)
};

CocoDataset load_coco_annotations(const std::string& path, const CocoLoadOptions& opts = {});

// Loads image pixels for a descriptor (PNG or PPM) as a standardized (3,H,W)
// tensor.
Tensor load_sample_image(const CocoImageEntry& entry);

// ---- geometry ----

struct ResizeResult {
    DetectionSample sample;
    double scale = 1.0;
    int64_t pad_right = 0, pad_bottom = 0;
    int64_t dropped_boxes = 0;  // degenerate (<1px) after rescaling
};

// Aspect-preserving bilinear resize plus bottom/right zero padding to a
// square target (target must be divisible by 32).
ResizeResult resize_and_pad(const DetectionSample& sample, int64_t target);

// Stacks per-sample (3,H,W) images into one (N,3,H,W) batch tensor.
Tensor stack_images(const std::vector<DetectionSample>& samples);

// Horizontal mirror of image and boxes.
DetectionSample flip_horizontal(const DetectionSample& sample);

} // namespace hegs
