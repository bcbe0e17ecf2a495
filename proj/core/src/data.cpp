#include "hegs/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include <json.hpp>

#include "hegs/image_io.hpp"
#include "hegs/random.hpp"

namespace hegs {

void SyntheticSceneConfig::validate() const {
    HEGS_CHECK(image_size >= 32 && image_size % 32 == 0, "image_size must be a multiple of 32");
    HEGS_CHECK(object_px_min >= 4, "objects smaller than 4px are not drawable");
    HEGS_CHECK(object_px_max >= object_px_min && object_px_max <= image_size / 2,
               "object size range invalid");
    HEGS_CHECK(num_objects_min >= 0 && num_objects_max >= num_objects_min &&
                   num_objects_max <= 64,
               "object count range invalid (max 64)");
    HEGS_CHECK(num_classes >= 1 && num_classes <= 4, "1..4 shape classes supported");
    HEGS_CHECK(clutter_density >= 0 && clutter_density <= 1, "clutter_density in [0,1]");
    HEGS_CHECK(occlusion_prob >= 0 && occlusion_prob <= 1, "occlusion_prob in [0,1]");
}

namespace {

struct PixBox {
    int x = 0, y = 0, w = 0, h = 0;  // top-left + size, pixels
    double iou(const PixBox& o) const {
        const int x1 = std::max(x, o.x), y1 = std::max(y, o.y);
        const int x2 = std::min(x + w, o.x + o.w), y2 = std::min(y + h, o.y + o.h);
        const double inter = std::max(0, x2 - x1) * std::max(0, y2 - y1);
        const double uni = double(w) * h + double(o.w) * o.h - inter;
        return uni > 0 ? inter / uni : 0.0;
    }
};

// painter-order rasterizer into a (3,S,S) [0,1] buffer
void draw_shape(std::vector<double>& img, int S, const PixBox& b, int shape,
                const std::array<double, 3>& color) {
    auto put = [&](int yy, int xx) {
        if (yy < 0 || yy >= S || xx < 0 || xx >= S) return;
        for (int c = 0; c < 3; ++c) img[(c * S + yy) * S + xx] = color[c];
    };
    if (shape == 0) {  // filled rectangle
        for (int yy = b.y; yy < b.y + b.h; ++yy)
            for (int xx = b.x; xx < b.x + b.w; ++xx) put(yy, xx);
    } else if (shape == 1) {  // filled ellipse inscribed in the box
        const double cx = b.x + b.w / 2.0, cy = b.y + b.h / 2.0;
        const double rx = b.w / 2.0, ry = b.h / 2.0;
        for (int yy = b.y; yy < b.y + b.h; ++yy)
            for (int xx = b.x; xx < b.x + b.w; ++xx) {
                const double dx = (xx + 0.5 - cx) / rx, dy = (yy + 0.5 - cy) / ry;
                if (dx * dx + dy * dy <= 1.0) put(yy, xx);
            }
    } else if (shape == 2) {  // thick plus/cross
        const int tw = std::max(2, static_cast<int>(std::lround(b.w * 0.45)));
        const int th = std::max(2, static_cast<int>(std::lround(b.h * 0.45)));
        const int x0 = b.x + (b.w - tw) / 2, y0 = b.y + (b.h - th) / 2;
        for (int yy = b.y; yy < b.y + b.h; ++yy)
            for (int xx = x0; xx < x0 + tw; ++xx) put(yy, xx);
        for (int yy = y0; yy < y0 + th; ++yy)
            for (int xx = b.x; xx < b.x + b.w; ++xx) put(yy, xx);
    } else {  // two vertical bars joined at the bottom
        const int tw = std::max(2, static_cast<int>(std::lround(b.w * 0.34)));
        const int bh = std::max(2, static_cast<int>(std::lround(b.h * 0.34)));
        for (int yy = b.y; yy < b.y + b.h; ++yy) {
            for (int xx = b.x; xx < b.x + tw; ++xx) put(yy, xx);
            for (int xx = b.x + b.w - tw; xx < b.x + b.w; ++xx) put(yy, xx);
        }
        for (int yy = b.y + b.h - bh; yy < b.y + b.h; ++yy)
            for (int xx = b.x; xx < b.x + b.w; ++xx) put(yy, xx);
    }
}

} // namespace

SyntheticRaw generate_synthetic_scene_raw(const SyntheticSceneConfig& cfg, int64_t index) {
    cfg.validate();
    const int S = cfg.image_size;
    Rng rng(Rng::derive(cfg.seed, /*stream=*/11, static_cast<uint64_t>(index)));

    SyntheticRaw out;
    out.image.assign(static_cast<size_t>(3) * S * S, 0.0);

    // textured noise background: dark base + coarse value noise + fine grain
    std::array<double, 3> base{rng.uniform(0.08, 0.30), rng.uniform(0.08, 0.30),
                               rng.uniform(0.08, 0.30)};
    const int G = 9;  // coarse grid
    std::vector<double> grid(G * G);
    for (auto& g : grid) g = rng.uniform(-0.06, 0.06);
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const double fy = static_cast<double>(y) * (G - 1) / (S - 1);
            const double fx = static_cast<double>(x) * (G - 1) / (S - 1);
            const int y0 = std::min(static_cast<int>(fy), G - 2);
            const int x0 = std::min(static_cast<int>(fx), G - 2);
            const double wy = fy - y0, wx = fx - x0;
            const double coarse = grid[y0 * G + x0] * (1 - wy) * (1 - wx) +
                                  grid[y0 * G + x0 + 1] * (1 - wy) * wx +
                                  grid[(y0 + 1) * G + x0] * wy * (1 - wx) +
                                  grid[(y0 + 1) * G + x0 + 1] * wy * wx;
            const double grain = rng.uniform(-0.02, 0.02);
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(base[c] + coarse + grain, 0.0, 0.45);
                out.image[(static_cast<size_t>(c) * S + y) * S + x] = v;
            }
        }
    out.background = out.image;

    // unlabeled low-contrast clutter: soft radial blobs, deliberately unlike
    // any class glyph so distractors never collide with a label shape
    const int clutter = static_cast<int>(std::lround(cfg.clutter_density * 24));
    for (int i = 0; i < clutter; ++i) {
        const int r = static_cast<int>(rng.uniform_int(2, 5));
        const int cx = static_cast<int>(rng.uniform_int(r, S - 1 - r));
        const int cy = static_cast<int>(rng.uniform_int(r, S - 1 - r));
        std::array<double, 3> cc;
        for (int c = 0; c < 3; ++c)
            cc[c] = std::clamp(base[c] + rng.uniform(-0.18, 0.18), 0.0, 0.5);
        for (int y = cy - r; y <= cy + r; ++y)
            for (int x = cx - r; x <= cx + r; ++x) {
                const double d2 = (double((x - cx) * (x - cx)) + (y - cy) * (y - cy)) /
                                  (double(r) * r);
                if (d2 > 1.0) continue;
                const double a = 1.0 - d2;  // smooth falloff, no crisp boundary
                for (int c = 0; c < 3; ++c) {
                    double& px = out.image[(static_cast<size_t>(c) * S + y) * S + x];
                    px = px * (1 - a) + cc[c] * a;
                }
            }
    }

    // labeled objects: bright class-distinct shapes with tight boxes
    const int n_obj =
        static_cast<int>(rng.uniform_int(cfg.num_objects_min, cfg.num_objects_max));
    std::vector<PixBox> placed;
    DetectionSample& sample = out.sample;
    for (int i = 0; i < n_obj; ++i) {
        PixBox b;
        b.w = static_cast<int>(rng.uniform_int(cfg.object_px_min, cfg.object_px_max));
        b.h = static_cast<int>(rng.uniform_int(cfg.object_px_min, cfg.object_px_max));

        bool placed_ok = false;
        if (!placed.empty() && rng.uniform() < cfg.occlusion_prob) {
            // overlap a previous object at 30-70% IoU
            const PixBox& anchor = placed[rng.uniform_int(0, placed.size() - 1)];
            for (int attempt = 0; attempt < 32 && !placed_ok; ++attempt) {
                b.x = anchor.x + static_cast<int>(rng.uniform_int(-b.w / 2, anchor.w / 2 + 1));
                b.y = anchor.y + static_cast<int>(rng.uniform_int(-b.h / 2, anchor.h / 2 + 1));
                b.x = std::clamp(b.x, 0, S - b.w);
                b.y = std::clamp(b.y, 0, S - b.h);
                const double iou = b.iou(anchor);
                placed_ok = iou >= 0.3 && iou <= 0.7;
            }
        }
        if (!placed_ok) {
            for (int attempt = 0; attempt < 24; ++attempt) {
                b.x = static_cast<int>(rng.uniform_int(0, S - b.w));
                b.y = static_cast<int>(rng.uniform_int(0, S - b.h));
                bool clear = true;
                for (const auto& p : placed)
                    if (b.iou(p) > 0.25) { clear = false; break; }
                if (clear) break;
            }
        }
        placed.push_back(b);

        const int cls = static_cast<int>(rng.uniform_int(0, cfg.num_classes - 1));
        std::array<double, 3> color;
        const int bright = static_cast<int>(rng.uniform_int(0, 2));
        for (int c = 0; c < 3; ++c)
            color[c] = c == bright ? rng.uniform(0.65, 1.0) : rng.uniform(0.2, 0.75);
        draw_shape(out.image, S, b, cls % 4, color);

        sample.gt.boxes.push_back({(b.x + b.w / 2.0) / S, (b.y + b.h / 2.0) / S,
                                   static_cast<double>(b.w) / S,
                                   static_cast<double>(b.h) / S});
        sample.gt.labels.push_back(cls);
    }

    sample.image_id = index;
    sample.width = S;
    sample.height = S;
    sample.image = Tensor::zeros({3, S, S});
    double* iv = sample.image.data();
    for (size_t i = 0; i < out.image.size(); ++i) iv[i] = (out.image[i] - 0.5) / 0.5;
    return out;
}

DetectionSample generate_synthetic_scene(const SyntheticSceneConfig& cfg, int64_t index) {
    return generate_synthetic_scene_raw(cfg, index).sample;
}

CocoDataset load_coco_annotations(const std::string& path, const CocoLoadOptions& opts) {
    namespace fs = std::filesystem;
    CocoDataset ds;
    std::ifstream in(path);
    HEGS_CHECK(in.good(), "cannot open annotation file " << path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    const fs::path root = fs::path(path).parent_path();

    auto fail = [&](const std::string& msg) {
        if (opts.strict) throw Error("coco load (strict): " + msg);
        ds.errors.push_back(msg);
    };

    // categories -> contiguous labels, ordered by original id
    std::map<int64_t, int> remap;
    if (j.contains("categories")) {
        for (const auto& c : j["categories"]) {
            if (!c.contains("id")) { fail("category without id"); continue; }
            remap.emplace(c["id"].get<int64_t>(), 0);
        }
    }
    for (auto& [id, label] : remap) {
        label = static_cast<int>(ds.category_ids.size());
        ds.category_ids.push_back(id);
    }
    ds.num_classes = static_cast<int64_t>(ds.category_ids.size());

    std::map<int64_t, size_t> image_index;
    if (!j.contains("images")) throw Error("coco json missing 'images'");
    for (const auto& im : j["images"]) {
        if (!im.contains("id") || !im.contains("file_name") || !im.contains("width") ||
            !im.contains("height")) {
            fail("image entry missing id/file_name/width/height");
            continue;
        }
        CocoImageEntry e;
        e.id = im["id"].get<int64_t>();
        e.file_name = (root / im["file_name"].get<std::string>()).string();
        e.width = im["width"].get<int64_t>();
        e.height = im["height"].get<int64_t>();
        if (image_index.count(e.id)) {
            fail("duplicate image id " + std::to_string(e.id));
            continue;
        }
        if (e.width <= 0 || e.height <= 0) {
            fail("non-positive image size for id " + std::to_string(e.id));
            continue;
        }
        if (opts.check_files && !fs::exists(e.file_name)) {
            fail("image file absent: " + e.file_name);
            continue;
        }
        image_index[e.id] = ds.images.size();
        ds.images.push_back(std::move(e));
    }

    if (j.contains("annotations")) {
        for (const auto& a : j["annotations"]) {
            if (!a.contains("image_id") || !a.contains("category_id") || !a.contains("bbox")) {
                fail("annotation missing image_id/category_id/bbox");
                continue;
            }
            const int64_t img_id = a["image_id"].get<int64_t>();
            auto it = image_index.find(img_id);
            if (it == image_index.end()) {
                fail("annotation references unknown image " + std::to_string(img_id));
                continue;
            }
            const auto& bbox = a["bbox"];
            if (!bbox.is_array() || bbox.size() != 4) {
                fail("bbox must be [x,y,w,h]");
                continue;
            }
            const double x = bbox[0].get<double>(), y = bbox[1].get<double>();
            const double w = bbox[2].get<double>(), h = bbox[3].get<double>();
            if (w <= 0 || h <= 0) {
                fail("non-positive bbox size on image " + std::to_string(img_id));
                continue;
            }
            auto rit = remap.find(a["category_id"].get<int64_t>());
            if (rit == remap.end()) {
                fail("unknown category id " +
                     std::to_string(a["category_id"].get<int64_t>()));
                continue;
            }
            CocoImageEntry& e = ds.images[it->second];
            const double W = static_cast<double>(e.width), H = static_cast<double>(e.height);
            e.gt.boxes.push_back({(x + w / 2) / W, (y + h / 2) / H, w / W, h / H});
            e.gt.labels.push_back(rit->second);
        }
    }
    return ds;
}

Tensor load_sample_image(const CocoImageEntry& entry) {
    ImageU8 img = load_image_file(entry.file_name);
    Tensor out = Tensor::zeros({3, img.height, img.width});
    double* ov = out.data();
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const int src_c = img.channels == 1 ? 0 : c;
                const double v =
                    img.pixels[(y * img.width + x) * img.channels + src_c] / 255.0;
                ov[(c * img.height + y) * img.width + x] = (v - 0.5) / 0.5;
            }
    return out;
}

ResizeResult resize_and_pad(const DetectionSample& sample, int64_t target) {
    HEGS_CHECK(target > 0 && target % 32 == 0, "resize target must be divisible by 32");
    const int64_t H = sample.image.dim(1), W = sample.image.dim(2);
    const double scale = static_cast<double>(target) / std::max(H, W);
    const int64_t nh = std::max<int64_t>(1, static_cast<int64_t>(std::lround(H * scale)));
    const int64_t nw = std::max<int64_t>(1, static_cast<int64_t>(std::lround(W * scale)));

    ResizeResult res;
    res.scale = scale;
    res.pad_right = target - nw;
    res.pad_bottom = target - nh;

    Tensor out = Tensor::zeros({3, target, target});
    const double* src = sample.image.data();
    double* dst = out.data();
    for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < nh; ++y)
            for (int64_t x = 0; x < nw; ++x) {
                // bilinear with pixel-center alignment
                const double sy = (y + 0.5) / scale - 0.5;
                const double sx = (x + 0.5) / scale - 0.5;
                const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sy)), 0, H - 1);
                const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(sx)), 0, W - 1);
                const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
                const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
                const double fy = std::clamp(sy - y0, 0.0, 1.0);
                const double fx = std::clamp(sx - x0, 0.0, 1.0);
                const double* p = src + c * H * W;
                dst[(c * target + y) * target + x] =
                    p[y0 * W + x0] * (1 - fy) * (1 - fx) + p[y0 * W + x1] * (1 - fy) * fx +
                    p[y1 * W + x0] * fy * (1 - fx) + p[y1 * W + x1] * fy * fx;
            }

    res.sample.image = out;
    res.sample.image_id = sample.image_id;
    res.sample.width = target;
    res.sample.height = target;
    for (size_t i = 0; i < sample.gt.boxes.size(); ++i) {
        const auto& b = sample.gt.boxes[i];
        // boxes follow the same affine map as pixels
        const double cx = b[0] * W * scale / target;
        const double cy = b[1] * H * scale / target;
        const double w = b[2] * W * scale / target;
        const double h = b[3] * H * scale / target;
        if (w * target < 1.0 || h * target < 1.0) {
            ++res.dropped_boxes;
            continue;
        }
        res.sample.gt.boxes.push_back({cx, cy, w, h});
        res.sample.gt.labels.push_back(sample.gt.labels[i]);
    }
    return res;
}

DetectionSample flip_horizontal(const DetectionSample& sample) {
    DetectionSample out = sample;
    const int64_t C = 3, H = sample.image.dim(1), W = sample.image.dim(2);
    out.image = Tensor::zeros({C, H, W});
    const double* src = sample.image.data();
    double* dst = out.image.data();
    for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                dst[(c * H + y) * W + x] = src[(c * H + y) * W + (W - 1 - x)];
    for (auto& b : out.gt.boxes) b[0] = 1.0 - b[0];
    return out;
}

Tensor stack_images(const std::vector<DetectionSample>& samples) {
    HEGS_CHECK(!samples.empty(), "cannot stack an empty batch");
    const int64_t H = samples[0].image.dim(1), W = samples[0].image.dim(2);
    Tensor out = Tensor::zeros({static_cast<int64_t>(samples.size()), 3, H, W});
    double* ov = out.data();
    const int64_t per = 3 * H * W;
    for (size_t i = 0; i < samples.size(); ++i) {
        HEGS_CHECK(samples[i].image.dim(1) == H && samples[i].image.dim(2) == W,
                   "batch images must share a size");
        std::copy(samples[i].image.data(), samples[i].image.data() + per, ov + i * per);
    }
    return out;
}

} // namespace hegs
