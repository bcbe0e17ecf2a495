#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hegs/data.hpp"
#include "hegs/image_io.hpp"
#include "test_util.hpp"

using namespace hegs;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

TEST_CASE("generator is a pure function of (seed, index)") {
    SyntheticSceneConfig cfg;
    cfg.seed = 77;
    auto a = generate_synthetic_scene(cfg, 13);
    auto b = generate_synthetic_scene(cfg, 13);
    CHECK(hegs_test::bitwise_equal(a.image, b.image));
    CHECK(a.gt.boxes == b.gt.boxes);
    CHECK(a.gt.labels == b.gt.labels);

    auto c = generate_synthetic_scene(cfg, 14);
    CHECK_FALSE(hegs_test::bitwise_equal(a.image, c.image));
}

TEST_CASE("single object scenes have exactly one box whose pixels differ from background") {
    SyntheticSceneConfig cfg;
    cfg.num_objects_min = 1;
    cfg.num_objects_max = 1;
    cfg.clutter_density = 0.0;
    cfg.occlusion_prob = 0.0;
    cfg.seed = 5;
    auto raw = generate_synthetic_scene_raw(cfg, 0);
    REQUIRE(raw.sample.gt.size() == 1);

    const int S = cfg.image_size;
    const auto& b = raw.sample.gt.boxes[0];
    const int x0 = static_cast<int>((b[0] - b[2] / 2) * S + 0.5);
    const int y0 = static_cast<int>((b[1] - b[3] / 2) * S + 0.5);
    const int w = static_cast<int>(b[2] * S + 0.5), h = static_cast<int>(b[3] * S + 0.5);
    int differing = 0;
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) {
            double d = 0;
            for (int c = 0; c < 3; ++c)
                d = std::max(d, std::fabs(raw.image[(c * S + y) * S + x] -
                                          raw.background[(c * S + y) * S + x]));
            if (d > 0.08) ++differing;
        }
    CHECK(differing > 0);
}

TEST_CASE("empirical size distribution: nearly all objects are COCO-small") {
    SyntheticSceneConfig cfg;  // defaults: 128px, 6..16px objects
    cfg.seed = 11;
    int64_t total = 0, small = 0;
    for (int i = 0; i < 1000; ++i) {
        auto s = generate_synthetic_scene(cfg, i);
        for (const auto& b : s.gt.boxes) {
            ++total;
            const double area = b[2] * cfg.image_size * b[3] * cfg.image_size;
            if (area < 32.0 * 32.0) ++small;
        }
    }
    CHECK(total > 1000);
    CHECK(static_cast<double>(small) / total >= 0.95);
}

TEST_CASE("label soundness: boxes are mostly covered by non-background pixels") {
    SyntheticSceneConfig cfg;
    cfg.clutter_density = 0.0;
    cfg.occlusion_prob = 0.0;
    cfg.seed = 21;
    const int S = cfg.image_size;
    for (int i = 0; i < 20; ++i) {
        auto raw = generate_synthetic_scene_raw(cfg, i);
        for (const auto& b : raw.sample.gt.boxes) {
            const int x0 = static_cast<int>(std::lround((b[0] - b[2] / 2) * S));
            const int y0 = static_cast<int>(std::lround((b[1] - b[3] / 2) * S));
            const int w = static_cast<int>(std::lround(b[2] * S));
            const int h = static_cast<int>(std::lround(b[3] * S));
            int differing = 0;
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) {
                    double d = 0;
                    for (int c = 0; c < 3; ++c)
                        d = std::max(d, std::fabs(raw.image[(c * S + y) * S + x] -
                                                  raw.background[(c * S + y) * S + x]));
                    if (d > 0.08) ++differing;
                }
            CHECK(static_cast<double>(differing) / (w * h) >= 0.6);
        }
    }
}

TEST_CASE("coco loader: normalization arithmetic and lenient/strict behavior") {
    const fs::path dir = fs::temp_directory_path() / "hegs_coco_test";
    fs::create_directories(dir);
    // one real image file so existence checks pass for it
    std::vector<uint8_t> rgb(10 * 10 * 3, 128);
    write_ppm((dir / "img1.ppm").string(), 10, 10, rgb);

    std::ofstream(dir / "ann.json") << R"({
      "images": [
        {"id": 1, "file_name": "img1.ppm", "width": 100, "height": 200},
        {"id": 2, "file_name": "missing.png", "width": 50, "height": 50}
      ],
      "annotations": [
        {"image_id": 1, "category_id": 7, "bbox": [10, 20, 30, 40]},
        {"image_id": 1, "category_id": 9, "bbox": [0, 0, -5, 10]}
      ],
      "categories": [{"id": 7}, {"id": 9}]
    })";

    auto ds = load_coco_annotations((dir / "ann.json").string());
    REQUIRE(ds.images.size() == 1);  // missing file rejected, error collected
    CHECK(ds.errors.size() == 2);    // absent file + negative bbox
    CHECK(ds.num_classes == 2);
    REQUIRE(ds.images[0].gt.size() == 1);
    const auto& b = ds.images[0].gt.boxes[0];
    CHECK(b[0] == doctest::Approx(0.25));
    CHECK(b[1] == doctest::Approx(0.20));
    CHECK(b[2] == doctest::Approx(0.30));
    CHECK(b[3] == doctest::Approx(0.20));
    CHECK(ds.images[0].gt.labels[0] == 0);  // category 7 -> 0

    CocoLoadOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(load_coco_annotations((dir / "ann.json").string(), strict), Error);
}

TEST_CASE("coco loader: empty annotations and duplicate image ids") {
    const fs::path dir = fs::temp_directory_path() / "hegs_coco_test2";
    fs::create_directories(dir);
    std::vector<uint8_t> rgb(4 * 4 * 3, 10);
    write_ppm((dir / "a.ppm").string(), 4, 4, rgb);

    std::ofstream(dir / "empty.json") << R"({
      "images": [{"id": 3, "file_name": "a.ppm", "width": 4, "height": 4}],
      "annotations": [], "categories": [{"id": 1}]
    })";
    auto ds = load_coco_annotations((dir / "empty.json").string());
    REQUIRE(ds.images.size() == 1);
    CHECK(ds.images[0].gt.size() == 0);  // G = 0 is a valid sample

    std::ofstream(dir / "dup.json") << R"({
      "images": [
        {"id": 3, "file_name": "a.ppm", "width": 4, "height": 4},
        {"id": 3, "file_name": "a.ppm", "width": 4, "height": 4}
      ],
      "annotations": [], "categories": []
    })";
    CocoLoadOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(load_coco_annotations((dir / "dup.json").string(), strict), Error);
    auto lenient = load_coco_annotations((dir / "dup.json").string());
    CHECK(lenient.images.size() == 1);
    CHECK(lenient.errors.size() == 1);
}

TEST_CASE("resize_and_pad: square inputs at target size keep boxes fixed") {
    SyntheticSceneConfig cfg;
    cfg.seed = 31;
    auto s = generate_synthetic_scene(cfg, 0);
    auto r = resize_and_pad(s, Shape{3, 128, 128}[1]);
    CHECK(r.scale == doctest::Approx(1.0));
    REQUIRE(r.sample.gt.boxes.size() == s.gt.boxes.size());
    for (size_t i = 0; i < s.gt.boxes.size(); ++i)
        for (int k = 0; k < 4; ++k)
            CHECK(r.sample.gt.boxes[i][k] == doctest::Approx(s.gt.boxes[i][k]).epsilon(1e-12));
}

TEST_CASE("resize_and_pad: 200x100 to 128 uses scale 0.64 and maps boxes like pixels") {
    DetectionSample s;
    s.image = Tensor::zeros({3, 100, 200});
    s.width = 200;
    s.height = 100;
    s.gt.boxes.push_back({0.25, 0.4, 0.1, 0.2});  // pixel box on the 200x100 canvas
    s.gt.labels.push_back(0);

    auto r = resize_and_pad(s, 128);
    CHECK(r.scale == doctest::Approx(0.64));
    CHECK(r.pad_bottom == 128 - 64);

    // corner-point oracle: transform the pixel-space corners directly
    const double x1 = (0.25 - 0.05) * 200 * 0.64, x2 = (0.25 + 0.05) * 200 * 0.64;
    const double y1 = (0.4 - 0.1) * 100 * 0.64, y2 = (0.4 + 0.1) * 100 * 0.64;
    const auto& b = r.sample.gt.boxes[0];
    CHECK(b[0] == doctest::Approx((x1 + x2) / 2 / 128).epsilon(1e-9));
    CHECK(b[1] == doctest::Approx((y1 + y2) / 2 / 128).epsilon(1e-9));
    CHECK(b[2] == doctest::Approx((x2 - x1) / 128).epsilon(1e-9));
    CHECK(b[3] == doctest::Approx((y2 - y1) / 128).epsilon(1e-9));
}

TEST_CASE("resize_and_pad drops sub-pixel boxes and counts them") {
    DetectionSample s;
    s.image = Tensor::zeros({3, 512, 512});
    s.width = 512;
    s.height = 512;
    s.gt.boxes.push_back({0.5, 0.5, 3.0 / 512, 3.0 / 512});  // 3px, shrinks to <1px
    s.gt.boxes.push_back({0.25, 0.25, 0.2, 0.2});
    s.gt.labels = {0, 1};
    auto r = resize_and_pad(s, 64);
    CHECK(r.dropped_boxes == 1);
    REQUIRE(r.sample.gt.size() == 1);
    CHECK(r.sample.gt.labels[0] == 1);
}

TEST_CASE("box normalization round trip stays within half a pixel") {
    SyntheticSceneConfig cfg;
    cfg.seed = 41;
    for (int i = 0; i < 10; ++i) {
        auto raw = generate_synthetic_scene_raw(cfg, i);
        const int S = cfg.image_size;
        for (const auto& b : raw.sample.gt.boxes) {
            // denormalize then re-normalize
            const double px = b[0] * S, py = b[1] * S, pw = b[2] * S, ph = b[3] * S;
            const std::array<double, 4> back{px / S, py / S, pw / S, ph / S};
            for (int k = 0; k < 4; ++k) CHECK(std::fabs(back[k] - b[k]) * S < 0.5);
        }
    }
}

TEST_CASE("resize target must divide 32") {
    DetectionSample s;
    s.image = Tensor::zeros({3, 64, 64});
    s.width = 64;
    s.height = 64;
    CHECK_THROWS_AS(resize_and_pad(s, 100), Error);
}

TEST_CASE("png encode/decode round trip") {
    ImageU8 img;
    img.width = 7;
    img.height = 5;
    img.channels = 3;
    img.pixels.resize(7 * 5 * 3);
    Rng rng(51);
    for (auto& p : img.pixels) p = static_cast<uint8_t>(rng.uniform_int(0, 255));
    auto bytes = encode_png(img);
    auto back = decode_png(bytes);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.channels == 3);
    CHECK(back.pixels == img.pixels);
}

TEST_SUITE_END();
