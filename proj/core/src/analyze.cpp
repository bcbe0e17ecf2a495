#include "hegs/analyze.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hegs/image_io.hpp"

namespace hegs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<uint8_t> tensor_image_to_rgb(const Tensor& img) {
    const int64_t H = img.dim(1), W = img.dim(2);
    std::vector<uint8_t> rgb(static_cast<size_t>(H * W * 3));
    const double* v = img.data();
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                const double raw = v[(c * H + y) * W + x] * 0.5 + 0.5;  // de-standardize
                rgb[(y * W + x) * 3 + c] =
                    static_cast<uint8_t>(std::clamp(raw, 0.0, 1.0) * 255.0 + 0.5);
            }
    return rgb;
}

void heat_overlay(std::vector<uint8_t>& rgb, int64_t H, int64_t W,
                  const std::vector<double>& map, int64_t mh, int64_t mw) {
    double mx = 0;
    for (double v : map) mx = std::max(mx, v);
    if (mx <= 0) mx = 1;
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            const int64_t my = y * mh / H, mxx = x * mw / W;
            const double a = 0.6 * map[my * mw + mxx] / mx;
            auto* px = &rgb[(y * W + x) * 3];
            px[0] = static_cast<uint8_t>(std::min(255.0, px[0] * (1 - a) + 255.0 * a));
            px[1] = static_cast<uint8_t>(px[1] * (1 - a));
            px[2] = static_cast<uint8_t>(px[2] * (1 - a));
        }
}

void draw_dot(std::vector<uint8_t>& rgb, int64_t H, int64_t W, double nx, double ny,
              double intensity) {
    const int64_t x = std::clamp<int64_t>(static_cast<int64_t>(nx * W), 0, W - 1);
    const int64_t y = std::clamp<int64_t>(static_cast<int64_t>(ny * H), 0, H - 1);
    auto* px = &rgb[(y * W + x) * 3];
    px[0] = static_cast<uint8_t>(std::min(255.0, 80 + 175 * intensity));
    px[1] = 16;
    px[2] = 16;
}

void draw_cross(std::vector<uint8_t>& rgb, int64_t H, int64_t W, double nx, double ny) {
    const int64_t x = std::clamp<int64_t>(static_cast<int64_t>(nx * W), 1, W - 2);
    const int64_t y = std::clamp<int64_t>(static_cast<int64_t>(ny * H), 1, H - 2);
    for (int64_t d = -1; d <= 1; ++d) {
        auto set = [&](int64_t yy, int64_t xx) {
            auto* px = &rgb[(yy * W + xx) * 3];
            px[0] = 255;
            px[1] = 255;
            px[2] = 0;
        };
        set(y, x + d);
        set(y + d, x);
    }
}

} // namespace

AnalyzeOutputs run_analysis(const nn::HegsDetr& model,
                            const std::vector<DetectionSample>& samples,
                            const std::string& out_dir, const AnalyzeOptions& opts) {
    HEGS_CHECK(!samples.empty(), "nothing to analyze");
    fs::create_directories(out_dir);
    AnalyzeOutputs out;

    Tensor images = stack_images(samples);
    auto inf = inference_forward(model, images, /*capture_traces=*/true);
    HEGS_CHECK(inf.memory.aifi_attention.defined(), "attention capture failed");

    const auto [s5h, s5w] = std::pair<int64_t, int64_t>{
        inf.memory.level_shapes.back().first, inf.memory.level_shapes.back().second};
    const int64_t heads = inf.memory.aifi_attention.dim(1);
    const int64_t T = inf.memory.aifi_attention.dim(2);

    std::vector<int64_t> image_ids;
    for (const auto& s : samples) image_ids.push_back(s.image_id);

    for (size_t i = 0; i < samples.size(); ++i) {
        // per-image slice of the (N,heads,T,T) attention tensor
        Tensor a = ops::narrow(inf.memory.aifi_attention, 0, static_cast<int64_t>(i), 1);
        a = ops::reshape(a, {heads, T, T});
        auto map = aifi_attention_map(a, s5h, s5w);

        const std::string id = std::to_string(samples[i].image_id);
        const std::string bin_path = (fs::path(out_dir) / ("attention_map_" + id + ".bin")).string();
        write_tensor_blob(bin_path, {s5h, s5w}, map);
        out.files.push_back(bin_path);

        std::ostringstream csv;
        csv.precision(17);
        csv << "row,col,value\n";
        for (int64_t r = 0; r < s5h; ++r)
            for (int64_t c = 0; c < s5w; ++c)
                csv << r << "," << c << "," << map[r * s5w + c] << "\n";
        const std::string csv_path = (fs::path(out_dir) / ("attention_map_" + id + ".csv")).string();
        std::ofstream(csv_path, std::ios::trunc) << csv.str();
        out.files.push_back(csv_path);

        // per-stage prediction dump
        json stages = json::array();
        for (const auto& sp : inf.stages) {
            const int64_t Q = sp.logits.dim(1), K = sp.logits.dim(2);
            const double* lv = sp.logits.data() + static_cast<int64_t>(i) * Q * K;
            const double* bv = sp.boxes.data() + static_cast<int64_t>(i) * Q * 4;
            json queries = json::array();
            for (int64_t q = 0; q < Q; ++q) {
                double best = -1e300;
                int bk = 0;
                for (int64_t k = 0; k < K; ++k)
                    if (lv[q * K + k] > best) { best = lv[q * K + k]; bk = static_cast<int>(k); }
                json e;
                e["query"] = q;
                e["class"] = bk;
                e["score"] = 1.0 / (1.0 + std::exp(-best));
                e["box"] = {bv[q * 4], bv[q * 4 + 1], bv[q * 4 + 2], bv[q * 4 + 3]};
                queries.push_back(e);
            }
            json st;
            st["stage"] = sp.stage_index;
            st["queries"] = queries;
            stages.push_back(st);
        }
        json pj;
        pj["image_id"] = samples[i].image_id;
        pj["stages"] = stages;
        const std::string pred_path = (fs::path(out_dir) / ("predictions_" + id + ".json")).string();
        std::ofstream(pred_path, std::ios::trunc) << pj.dump(2);
        out.files.push_back(pred_path);

        if (opts.plot) {
            auto rgb = tensor_image_to_rgb(samples[i].image);
            const int64_t H = samples[i].image.dim(1), W = samples[i].image.dim(2);
            heat_overlay(rgb, H, W, map, s5h, s5w);
            const std::string ppm = (fs::path(out_dir) / ("attention_overlay_" + id + ".ppm")).string();
            write_ppm(ppm, W, H, rgb);
            out.files.push_back(ppm);

            auto rgb2 = tensor_image_to_rgb(samples[i].image);
            double wmax = 0;
            for (const auto& r : inf.trace.samples)
                if (r.image == static_cast<int64_t>(i)) wmax = std::max(wmax, r.weight);
            for (const auto& r : inf.trace.samples) {
                if (r.image != static_cast<int64_t>(i) ||
                    r.stage != model.cfg.decoder.num_stages)
                    continue;
                draw_dot(rgb2, H, W, r.x, r.y, wmax > 0 ? r.weight / wmax : 0.0);
            }
            for (const auto& r : inf.trace.samples) {
                if (r.image != static_cast<int64_t>(i) ||
                    r.stage != model.cfg.decoder.num_stages || r.head || r.level || r.point)
                    continue;
                draw_cross(rgb2, H, W, r.ref_x, r.ref_y);
            }
            const std::string sc = (fs::path(out_dir) / ("sampling_scatter_" + id + ".ppm")).string();
            write_ppm(sc, W, H, rgb2);
            out.files.push_back(sc);
        }
    }

    const std::string rec_path = (fs::path(out_dir) / "sampling_records.csv").string();
    std::ofstream(rec_path, std::ios::trunc) << sampling_records_csv(inf.trace, image_ids);
    out.files.push_back(rec_path);
    return out;
}

std::vector<std::string> render_exports(const std::string& analysis_dir) {
    std::vector<std::string> written;
    std::vector<fs::path> blobs;
    for (const auto& e : fs::directory_iterator(analysis_dir)) {
        const auto name = e.path().filename().string();
        if (name.rfind("attention_map_", 0) == 0 && e.path().extension() == ".bin")
            blobs.push_back(e.path());
    }
    std::sort(blobs.begin(), blobs.end());
    for (const auto& blob : blobs) {
        auto [shape, data] = read_tensor_blob(blob.string());
        HEGS_CHECK(shape.size() == 2, "attention blob must be 2-D");
        const int64_t H = shape[0], W = shape[1];
        double mx = 0;
        for (double v : data) mx = std::max(mx, v);
        if (mx <= 0) mx = 1;
        const int64_t scale = std::max<int64_t>(1, 256 / std::max(H, W));
        std::vector<uint8_t> rgb(static_cast<size_t>(H * scale * W * scale * 3));
        for (int64_t y = 0; y < H * scale; ++y)
            for (int64_t x = 0; x < W * scale; ++x) {
                const double v = data[(y / scale) * W + (x / scale)] / mx;
                auto* px = &rgb[(y * W * scale + x) * 3];
                px[0] = static_cast<uint8_t>(255 * v);
                px[1] = static_cast<uint8_t>(40 * (1 - v));
                px[2] = static_cast<uint8_t>(255 * (1 - v));
            }
        fs::path outp = blob;
        outp.replace_extension(".ppm");
        write_ppm(outp.string(), W * scale, H * scale, rgb);
        written.push_back(outp.string());
    }
    return written;
}

namespace {

using Clock = std::chrono::steady_clock;

void item(SelftestResult& res, const std::string& name, bool pass,
          const std::string& detail = "") {
    res.items.push_back({name, pass, detail});
}

} // namespace

SelftestResult run_selftest() {
    SelftestResult res;
    const auto t0 = Clock::now();
    Rng rng(7777);

    // space-to-depth bijection (bitwise)
    {
        Tensor x = Tensor::zeros({2, 3, 8, 8});
        for (auto& v : x.values()) v = rng.normal();
        Tensor rt = ops::spd_inverse(ops::spd_rearrange(x));
        bool ok = rt.shape() == x.shape();
        if (ok)
            for (int64_t i = 0; i < x.numel(); ++i)
                if (x.data()[i] != rt.data()[i]) { ok = false; break; }
        item(res, "spd_bijection_bitwise", ok);
    }
    // frequency path realness: identity gate round trip
    {
        Tensor x = Tensor::zeros({1, 4, 6, 10});
        for (auto& v : x.values()) v = rng.normal();
        Tensor g = Tensor::full({4, 8, 8}, 1.0);
        Tensor y = ops::freq_gate(x, g);
        double err = 0;
        for (int64_t i = 0; i < x.numel(); ++i)
            err = std::max(err, std::fabs(x.data()[i] - y.data()[i]));
        item(res, "fft_identity_roundtrip", err < 1e-6, "max err " + std::to_string(err));
    }
    // softmax rows sum to 1
    {
        Tensor x = Tensor::zeros({5, 17});
        for (auto& v : x.values()) v = rng.normal() * 3;
        Tensor s = ops::softmax_lastdim(x);
        double worst = 0;
        for (int64_t r = 0; r < 5; ++r) {
            double sum = 0;
            for (int64_t c = 0; c < 17; ++c) sum += s.data()[r * 17 + c];
            worst = std::max(worst, std::fabs(sum - 1.0));
        }
        item(res, "softmax_rows_sum_to_one", worst < 1e-6);
    }
    // residual identity of a zero-projected attention block
    {
        Rng r2(99);
        nn::FcaBlock fca(8, 2, r2);
        nn::zero_(fca.sfa.proj_out.weight);
        nn::zero_(fca.sfa.proj_out.bias);
        nn::zero_(fca.dffn.proj_out.weight);
        nn::zero_(fca.dffn.proj_out.bias);
        Tensor x = Tensor::zeros({1, 8, 4, 4});
        for (auto& v : x.values()) v = r2.normal();
        Tensor y = fca.forward(x);
        bool ok = true;
        for (int64_t i = 0; i < x.numel(); ++i)
            if (x.data()[i] != y.data()[i]) { ok = false; break; }
        item(res, "residual_identity_zero_projection", ok);
    }
    // assignment optimality vs brute force on small instances
    {
        bool ok = true;
        for (int trial = 0; trial < 40 && ok; ++trial) {
            const int64_t nq = rng.uniform_int(1, 5), ng = rng.uniform_int(1, 5);
            std::vector<double> cost(nq * ng);
            for (auto& c : cost) c = rng.uniform(0, 10);
            auto got = solve_assignment(cost, nq, ng);
            double got_cost = 0;
            for (auto [q, g] : got.pairs) got_cost += cost[q * ng + g];
            // brute force over permutations of the smaller side
            std::vector<int64_t> qs(nq), gs(ng);
            std::iota(qs.begin(), qs.end(), 0);
            std::iota(gs.begin(), gs.end(), 0);
            double best = 1e300;
            if (nq <= ng) {
                do {
                    double c = 0;
                    for (int64_t i = 0; i < nq; ++i) c += cost[i * ng + gs[i]];
                    best = std::min(best, c);
                } while (std::next_permutation(gs.begin(), gs.end()));
            } else {
                do {
                    double c = 0;
                    for (int64_t i = 0; i < ng; ++i) c += cost[qs[i] * ng + i];
                    best = std::min(best, c);
                } while (std::next_permutation(qs.begin(), qs.end()));
            }
            ok = std::fabs(got_cost - best) < 1e-9;
        }
        item(res, "assignment_matches_bruteforce", ok);
    }
    // query-collection group counts
    {
        auto counts_ok = [&](SqrVariant v, int c2, int c3) {
            auto [a, b] = sqr_group_counts(v);
            return a == c2 && b == c3;
        };
        bool ok = counts_ok(SqrVariant::Baseline, 1, 1) && counts_ok(SqrVariant::I, 1, 2) &&
                  counts_ok(SqrVariant::II, 2, 3) && counts_ok(SqrVariant::III, 2, 4);
        item(res, "sqr_group_counts", ok);
    }
    // box range validity on an untrained tiny model
    {
        ModelConfig mc;
        mc.backbone.stage_channels = {8, 16, 32, 64};
        mc.backbone.stem_channels = 8;
        mc.backbone.attention_heads = 2;
        mc.neck.hidden_dim = 32;
        mc.neck.aifi_heads = 2;
        mc.neck.aifi_ffn_dim = 64;
        mc.neck.large_kernel = 7;
        mc.neck.repblock_depth = 1;
        mc.decoder.hidden_dim = 32;
        mc.decoder.heads = 2;
        mc.decoder.num_queries = 8;
        mc.decoder.ffn_dim = 64;
        nn::HegsDetr model(mc, 3);
        model.set_training(false);
        Tensor img = Tensor::zeros({1, 3, 64, 64});
        Rng r3(5);
        for (auto& v : img.values()) v = r3.uniform(-1, 1);
        auto inf = inference_forward(model, img);
        bool ok = true;
        for (const auto& sp : inf.stages)
            for (double b : sp.boxes.values())
                if (!(b >= 0.0 && b <= 1.0)) { ok = false; break; }
        item(res, "boxes_within_unit_range", ok);
    }

    res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

} // namespace hegs
