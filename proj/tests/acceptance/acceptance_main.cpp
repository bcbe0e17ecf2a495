// Acceptance suite: one pass/fail line per criterion.
//
//   hegs_acceptance                  run criteria 1..8 in order
//   hegs_acceptance --criterion N    run a single criterion
//   hegs_acceptance --train-models   train/cache the models criteria 6-7 use
//
// Trained models are cached under $HEGS_ACCEPT_CACHE (default:
// ./acceptance_cache); training is deterministic, so cache hits are
// equivalent to retraining. $HEGS_ACCEPT_ABL_EPOCHS overrides the ablation
// training budget.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "hegs/analyze.hpp"
#include "hegs/trainer.hpp"
#include "test_util.hpp"

using namespace hegs;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string cache_dir() {
    const char* env = std::getenv("HEGS_ACCEPT_CACHE");
    return env && *env ? env : "acceptance_cache";
}

int ablation_epochs() {
    const char* env = std::getenv("HEGS_ACCEPT_ABL_EPOCHS");
    return env && *env ? std::atoi(env) : 16;
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion1() {
    Outcome out;
    const auto t0 = Clock::now();
    auto self = run_selftest();
    for (const auto& item : self.items)
        out.require(item.pass, "invariant " + item.name + " failed " + item.detail);

    // attention softmax rows on a live module
    Rng rng(17);
    nn::MultiheadAttention mha(16, 4, rng);
    Tensor x = Tensor::zeros({2, 9, 16});
    hegs_test::fill_random(x, rng);
    Tensor attn;
    mha.forward(x, x, x, Tensor(), &attn);
    double worst = 0;
    const int64_t T = 9;
    for (int64_t r = 0; r < attn.numel() / T; ++r) {
        double s = 0;
        for (int64_t c = 0; c < T; ++c) s += attn.data()[r * T + c];
        worst = std::max(worst, std::fabs(s - 1.0));
    }
    out.require(worst < 1e-6, "attention row sums off by " + std::to_string(worst));

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out.require(secs < 120.0, "invariant suite exceeded 2 minutes");
    out.detail += (out.detail.empty() ? "" : "; ") + std::to_string(secs) + "s";
    return out;
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion2() {
    Outcome out;
    const auto t0 = Clock::now();
    Rng rng(23);

    auto check = [&](const std::string& name, double err) {
        out.require(err < 1e-3, name + " gradient error " + std::to_string(err));
    };

    {
        nn::CspBlock csp(8, std::make_unique<nn::FcaBlock>(4, 2, rng), rng);
        csp.set_training(true);
        Tensor x = Tensor::zeros({2, 8, 4, 4});
        hegs_test::fill_random(x, rng);
        check("csp_fca", hegs_test::gradcheck(x.clone(), [&](const Tensor& t) {
            return csp.forward(t);
        }));
    }
    {
        nn::Sfa sfa(8, 2, rng);
        Tensor x = Tensor::zeros({1, 8, 4, 4});
        hegs_test::fill_random(x, rng);
        check("sfa", hegs_test::gradcheck(x.clone(), [&](const Tensor& t) {
            return sfa.forward(t);
        }));
    }
    {
        nn::Dffn dffn(8, rng);
        Tensor x = Tensor::zeros({1, 8, 4, 4});
        hegs_test::fill_random(x, rng);
        check("dffn", hegs_test::gradcheck(x.clone(), [&](const Tensor& t) {
            return dffn.forward(t);
        }));
    }
    {
        nn::OmniKernel omni(8, 7, rng);
        Tensor x = Tensor::zeros({1, 8, 4, 4});
        hegs_test::fill_random(x, rng);
        check("omni_kernel", hegs_test::gradcheck(x.clone(), [&](const Tensor& t) {
            return omni.forward(t);
        }));
    }
    {
        nn::Gape gape(8, rng);
        Tensor content = Tensor::zeros({1, 3, 8});
        hegs_test::fill_random(content, rng);
        Tensor refs = Tensor::zeros({1, 3, 4});
        hegs_test::fill_uniform(refs, rng, 0.2, 0.7);
        Tensor pe = box_position_encodings(refs, 8);
        check("gape_mlps", hegs_test::gradcheck(content.clone(), [&](const Tensor& t) {
            return gape.positional_query(t, pe);
        }));
    }
    {
        DecoderConfig cfg;
        cfg.hidden_dim = 16;
        cfg.heads = 2;
        cfg.num_queries = 4;
        cfg.num_classes = 3;
        cfg.ffn_dim = 32;
        cfg.sampling_points = 2;
        nn::DecoderStage stage(cfg, rng);
        EncoderMemory mem;
        mem.level_shapes = {{4, 4}, {2, 2}, {1, 1}};
        mem.level_strides = {8, 16, 32};
        int64_t off = 0;
        for (auto [h, w] : mem.level_shapes) {
            mem.level_start_offsets.push_back(off);
            off += h * w;
        }
        mem.tokens = Tensor::zeros({1, off, 16});
        hegs_test::fill_random(mem.tokens, rng, 0.5);
        QueryState qs;
        qs.content = Tensor::zeros({1, 4, 16});
        hegs_test::fill_random(qs.content, rng, 0.5);
        qs.ref_boxes = Tensor::zeros({1, 4, 4});
        hegs_test::fill_uniform(qs.ref_boxes, rng, 0.25, 0.6);
        nn::Gape gape(16, rng);
        // content path exercises self-attention, the deformable sampler and
        // both heads
        check("deformable_cross_attention",
              hegs_test::gradcheck(qs.content.clone(), [&](const Tensor& t) {
                  QueryState q2{t, qs.ref_boxes};
                  auto o = stage.forward(q2, mem, &gape, Tensor(), 1, nullptr);
                  return ops::concat({o.preds.logits, o.preds.boxes}, 2);
              }));
        // and the memory path isolates the bilinear sampling backward
        check("deformable_memory_path",
              hegs_test::gradcheck(mem.tokens.clone(), [&](const Tensor& t) {
                  EncoderMemory m2 = mem;
                  m2.tokens = t;
                  auto o = stage.forward(qs, m2, &gape, Tensor(), 1, nullptr);
                  return o.preds.logits;
              }));
    }
    {
        GtInstances gt;
        gt.boxes.push_back({0.4, 0.5, 0.2, 0.25});
        gt.boxes.push_back({0.65, 0.3, 0.15, 0.2});
        gt.labels = {1, 0};
        std::vector<MatchResult> matches(1);
        matches[0].pairs = {{0, 0}, {2, 1}};
        Rng lr(29);
        Tensor logits = Tensor::zeros({1, 3, 3});
        hegs_test::fill_random(logits, lr);
        Tensor boxes = Tensor::zeros({1, 3, 4});
        hegs_test::fill_uniform(boxes, lr, 0.2, 0.6);
        StagePredictions p;
        p.boxes = boxes;
        check("detection_loss", hegs_test::gradcheck(logits.clone(), [&](const Tensor& t) {
            StagePredictions q;
            q.logits = t;
            q.boxes = boxes;
            return detection_loss(q, {gt}, matches).total;
        }));
        check("detection_loss_boxes", hegs_test::gradcheck(boxes.clone(), [&](const Tensor& t) {
            StagePredictions q;
            q.logits = logits;
            q.boxes = t;
            return detection_loss(q, {gt}, matches).total;
        }));
    }

    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out.require(secs < 300.0, "gradient suite exceeded 5 minutes");
    out.detail += (out.detail.empty() ? "" : "; ") + std::to_string(secs) + "s";
    return out;
}

// ---------------------------------------------------------------- criterion 3

double brute_force_min_cost(const std::vector<double>& cost, int64_t nq, int64_t ng) {
    double best = 1e300;
    std::vector<int64_t> idx(std::max(nq, ng));
    std::iota(idx.begin(), idx.end(), 0);
    if (nq >= ng) {
        std::vector<int64_t> qs(nq);
        std::iota(qs.begin(), qs.end(), 0);
        do {
            double c = 0;
            for (int64_t g = 0; g < ng; ++g) c += cost[qs[g] * ng + g];
            best = std::min(best, c);
        } while (std::next_permutation(qs.begin(), qs.end()));
    } else {
        std::vector<int64_t> gs(ng);
        std::iota(gs.begin(), gs.end(), 0);
        do {
            double c = 0;
            for (int64_t q = 0; q < nq; ++q) c += cost[q * ng + gs[q]];
            best = std::min(best, c);
        } while (std::next_permutation(gs.begin(), gs.end()));
    }
    return best;
}

Outcome criterion3() {
    Outcome out;
    // assignment vs exhaustive optimum, 200 instances
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int64_t nq = rng.uniform_int(1, 6), ng = rng.uniform_int(1, 6);
        std::vector<double> cost(nq * ng);
        for (auto& c : cost) c = rng.uniform(0.0, 10.0);
        auto res = solve_assignment(cost, nq, ng);
        double got = 0;
        for (auto [q, g] : res.pairs) got += cost[q * ng + g];
        if (std::fabs(got - brute_force_min_cost(cost, nq, ng)) > 1e-9) {
            out.require(false, "assignment suboptimal on trial " + std::to_string(trial));
            break;
        }
    }

    // AP against the hand-traced protocol fixture
    {
        std::vector<EvalGtBox> gts;
        auto add_gt = [&](int64_t img, std::array<double, 4> box) {
            EvalGtBox g;
            g.image_id = img;
            g.cls = 0;
            g.box = box;
            g.area = (box[2] - box[0]) * (box[3] - box[1]);
            gts.push_back(g);
        };
        add_gt(1, {0, 0, 10, 10});
        add_gt(1, {20, 20, 30, 30});
        add_gt(2, {5, 5, 15, 15});
        std::vector<Detection> dets;
        auto add_det = [&](int64_t img, double score, std::array<double, 4> box) {
            Detection d;
            d.image_id = img;
            d.cls = 0;
            d.score = score;
            d.box = box;
            dets.push_back(d);
        };
        add_det(1, 0.95, {0, 0, 10, 10});
        add_det(1, 0.90, {40, 40, 50, 50});
        add_det(1, 0.80, {20, 20, 30, 30});
        add_det(2, 0.60, {5, 5, 15, 15});
        auto rep = average_precision(dets, gts);
        const double want = 84.25 / 101.0;
        out.require(std::fabs(rep.ap50.value_or(-1) - want) < 1e-6,
                    "AP50 fixture: got " + std::to_string(rep.ap50.value_or(-1)));
        out.require(std::fabs(rep.ap.value_or(-1) - want) < 1e-6, "AP fixture mean");
    }

    // omni kernel branch-sum transcription
    {
        Rng orng(37);
        nn::OmniKernel omni(8, 7, orng);
        Tensor x = Tensor::zeros({1, 8, 6, 6});
        hegs_test::fill_random(x, orng);
        Tensor sum = ops::add(ops::add(x, omni.local_branch(x)),
                              ops::add(omni.large_branch(x), omni.global_branch(x)));
        Tensor want = omni.proj_out.forward(sum);
        out.require(hegs_test::max_abs_diff(omni.forward(x), want) < 1e-6,
                    "omni kernel branch transcription");
    }

    // csp-fca straight-line transcription (wiring level: inner reused intact)
    {
        Rng crng(41);
        nn::CspBlock blk(8, std::make_unique<nn::FcaBlock>(4, 2, crng), crng);
        blk.set_training(false);
        Tensor x = Tensor::zeros({1, 8, 4, 4});
        hegs_test::fill_random(x, crng);
        Tensor xp = blk.conv_in.forward(x);
        Tensor x1 = ops::narrow(xp, 1, 0, 4);
        Tensor x2 = ops::narrow(xp, 1, 4, 4);
        Tensor want = blk.conv_out.forward(ops::concat({x1, blk.inner->forward(x2)}, 1));
        out.require(hegs_test::max_abs_diff(blk.forward(x), want) < 1e-6,
                    "csp transcription");

        // and the fca cascade itself, assembled from its published pieces
        auto& fca = dynamic_cast<nn::FcaBlock&>(*blk.inner);
        Tensor y = Tensor::zeros({1, 4, 4, 4});
        hegs_test::fill_random(y, crng);
        Tensor x_sfa = ops::add(fca.sfa.forward(nn::layer_norm_nchw(y, fca.ln1)), y);
        Tensor want_fca =
            ops::add(fca.dffn.forward(nn::layer_norm_nchw(x_sfa, fca.ln2)), x_sfa);
        out.require(hegs_test::max_abs_diff(fca.forward(y), want_fca) < 1e-6,
                    "fca cascade transcription");
    }
    return out;
}

// ---------------------------------------------------------------- criterion 4

ModelConfig tiny_model_config() {
    ModelConfig mc;
    mc.backbone.stem_channels = 8;
    mc.backbone.stage_channels = {8, 16, 32, 64};
    mc.backbone.attention_heads = 2;
    mc.neck.hidden_dim = 32;
    mc.neck.aifi_heads = 2;
    mc.neck.aifi_ffn_dim = 64;
    mc.neck.large_kernel = 7;
    mc.neck.repblock_depth = 1;
    mc.decoder.hidden_dim = 32;
    mc.decoder.heads = 2;
    mc.decoder.num_queries = 8;
    mc.decoder.num_classes = 3;
    mc.decoder.ffn_dim = 64;
    mc.decoder.sampling_points = 2;
    return mc;
}

Outcome criterion4() {
    Outcome out;
    auto counts = [&](SqrVariant v, int c2, int c3) {
        auto [a, b] = sqr_group_counts(v);
        out.require(a == c2 && b == c3,
                    std::string("group counts for variant ") + to_string(v));
    };
    counts(SqrVariant::Baseline, 1, 1);
    counts(SqrVariant::I, 1, 2);
    counts(SqrVariant::II, 2, 3);
    counts(SqrVariant::III, 2, 4);

    // path tags of C^3 under variant II
    auto dummy = [](const std::string& path) {
        QueryGroup g;
        g.path = path;
        g.state.content = Tensor::zeros({1, 1, 8});
        g.state.ref_boxes = Tensor::full({1, 1, 4}, 0.5);
        return g;
    };
    std::vector<QueryGroup> c1{dummy("0")};
    std::vector<QueryGroup> d1{dummy("0-1")};
    auto c2 = sqr_collect(SqrVariant::II, 1, c1, d1);
    std::vector<QueryGroup> d2;
    for (const auto& g : c2) d2.push_back(dummy(g.path + "-2"));
    auto c3 = sqr_collect(SqrVariant::II, 2, c2, d2);
    std::vector<std::string> tags;
    for (const auto& g : c3) tags.push_back(g.path);
    out.require(tags == std::vector<std::string>{"0-1-2", "0-2", "0-1"},
                "variant II C3 tags");

    // inference invariance across variants, bitwise on a fixed-weight model
    nn::HegsDetr model(tiny_model_config(), 101);
    SyntheticSceneConfig scfg;
    scfg.image_size = 64;
    scfg.seed = 5;
    std::vector<DetectionSample> samples{generate_synthetic_scene(scfg, 0)};
    Tensor images = stack_images(samples);
    std::vector<GtInstances> gts{samples[0].gt};

    std::vector<std::vector<double>> snap;
    for (auto& [n, t] : model.named_parameters()) snap.push_back(t.values());
    for (auto& [n, t] : model.named_buffers()) snap.push_back(t.values());
    auto restore = [&]() {
        size_t i = 0;
        for (auto& [n, t] : model.named_parameters()) t.values() = snap[i++];
        for (auto& [n, t] : model.named_buffers()) t.values() = snap[i++];
    };

    Tensor reference;
    for (auto variant : {SqrVariant::Baseline, SqrVariant::I, SqrVariant::II, SqrVariant::III}) {
        restore();
        model.set_training(true);
        SqrOptions opts;
        opts.variant = variant;
        sqr_training_loss(model, images, gts, opts);
        restore();
        model.set_training(false);
        auto inf = inference_forward(model, images);
        if (!reference.defined()) {
            reference = inf.final_stage().logits;
        } else {
            out.require(hegs_test::bitwise_equal(reference, inf.final_stage().logits),
                        std::string("inference differs under variant ") + to_string(variant));
        }
    }
    return out;
}

// ---------------------------------------------------------------- criterion 5

Outcome criterion5() {
    Outcome out;
    const int64_t H = 4, W = 4, T = H * W;

    Tensor uniform = Tensor::full({3, T, T}, 1.0 / T);
    auto map = aifi_attention_map(uniform, H, W);
    for (double v : map)
        out.require(v == 1.0 / T, "uniform attention map cell not exactly uniform");

    Tensor ident = Tensor::zeros({1, T, T});
    for (int64_t j = 0; j < T; ++j) ident.data()[j * T + j] = 1.0;
    auto imap = aifi_attention_map(ident, H, W);
    for (double v : imap)
        out.require(std::fabs(v - 1.0 / T) < 1e-12, "permutation-matrix map mismatch");

    Rng rng(47);
    Tensor A = Tensor::zeros({2, T, T});
    for (int64_t r = 0; r < 2 * T; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < T; ++c) {
            A.data()[r * T + c] = rng.uniform(0.01, 1.0);
            sum += A.data()[r * T + c];
        }
        for (int64_t c = 0; c < T; ++c) A.data()[r * T + c] /= sum;
    }
    auto base = aifi_attention_map(A, H, W);
    std::vector<int> hp{1, 0};
    std::vector<int64_t> qp(T);
    std::iota(qp.begin(), qp.end(), 0);
    for (int64_t i = T - 1; i > 0; --i) std::swap(qp[i], qp[rng.uniform_int(0, i)]);
    Tensor B = Tensor::zeros({2, T, T});
    for (int64_t h = 0; h < 2; ++h)
        for (int64_t j = 0; j < T; ++j)
            for (int64_t k = 0; k < T; ++k)
                B.data()[(h * T + j) * T + k] = A.data()[(hp[h] * T + qp[j]) * T + k];
    auto perm = aifi_attention_map(B, H, W);
    for (int64_t k = 0; k < T; ++k)
        out.require(std::fabs(perm[k] - base[k]) < 1e-12, "permutation invariance");
    return out;
}

// ------------------------------------------------------- trained-model cache

RunConfig desk_run_config(const std::string& name, uint64_t seed, SqrVariant variant,
                          bool use_gape, int epochs, double early_stop) {
    RunConfig cfg = RunConfig::desk_profile();
    cfg.seed = seed;
    cfg.sqr_variant = variant;
    cfg.model.decoder.use_gape = use_gape;
    cfg.optim.epochs = epochs;
    cfg.early_stop_ap50 = early_stop;
    cfg.optim.warmup_steps = 100;
    cfg.optim.lr = 2.5e-4;
    cfg.eval_interval = 2;
    cfg.output_dir = (fs::path(cache_dir()) / (name + "_seed" + std::to_string(seed))).string();
    return cfg;
}

struct CachedRun {
    RunConfig cfg;
    double ap50 = 0;
    int64_t epochs_trained = 0;
    std::string ckpt;
};

// trains (or reuses) one named run; results live next to the checkpoint
CachedRun ensure_trained(const std::string& name, uint64_t seed, SqrVariant variant,
                         bool use_gape, int epochs, double early_stop) {
    CachedRun run;
    run.cfg = desk_run_config(name, seed, variant, use_gape, epochs, early_stop);
    const fs::path dir = run.cfg.output_dir;
    const fs::path marker = dir / "result.json";
    const std::string want_cfg = serialize_run_config(run.cfg);

    if (fs::exists(marker)) {
        std::ifstream in(marker);
        json j;
        in >> j;
        if (j.value("config", "") == want_cfg) {
            run.ap50 = j["ap50"].get<double>();
            run.epochs_trained = j["epochs_trained"].get<int64_t>();
            run.ckpt = (dir / "last.ckpt").string();
            return run;
        }
    }

    Trainer trainer(run.cfg);
    auto res = trainer.train();
    auto ev = trainer.evaluate("val");
    run.ap50 = ev.ap.ap50.value_or(0.0);
    run.epochs_trained = res.last_epoch;
    run.ckpt = res.last_checkpoint;

    json j;
    j["config"] = want_cfg;
    j["ap50"] = run.ap50;
    j["epochs_trained"] = run.epochs_trained;
    j["best_ap50"] = res.best_ap50;
    std::ofstream(marker, std::ios::trunc) << j.dump(2);
    return run;
}

int train_models() {
    const int epochs = ablation_epochs();
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        for (const auto& [name, variant, gape] :
             std::vector<std::tuple<std::string, SqrVariant, bool>>{
                 {"sqr2", SqrVariant::II, true},
                 {"base", SqrVariant::Baseline, true},
                 {"nogape", SqrVariant::II, false}}) {
            auto run = ensure_trained(name, seed, variant, gape, epochs, /*early_stop=*/-1);
            std::cout << "model " << name << " seed " << seed << ": AP50 " << run.ap50
                      << " after " << run.epochs_trained << " epochs\n";
        }
    }
    return 0;
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion6() {
    Outcome out;
    // untrained model scores ~0
    {
        RunConfig cfg = desk_run_config("untrained_probe", 1, SqrVariant::II, true, 1, -1);
        nn::HegsDetr model(cfg.model, cfg.seed);
        model.set_training(false);
        std::vector<DetectionSample> val;
        for (int i = 0; i < 40; ++i)
            val.push_back(generate_synthetic_scene(cfg.dataset.synthetic,
                                                   cfg.dataset.train_size + i));
        auto ev = evaluate_model(model, val, cfg.optim.batch_size, cfg.score_floor);
        const double ap50 = ev.ap.ap50.value_or(0.0);
        out.require(ap50 <= 0.05, "untrained AP50 " + std::to_string(ap50) + " > 0.05");
        out.detail += "untrained AP50 " + std::to_string(ap50);
    }

    int passed = 0;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        // reuse the ablation model; extend training toward 60 epochs if the
        // short budget was not enough
        auto run = ensure_trained("sqr2", seed, SqrVariant::II, true, ablation_epochs(), -1);
        double ap50 = run.ap50;
        if (ap50 < 0.5) {
            RunConfig cont = desk_run_config("sqr2_long", seed, SqrVariant::II, true, 60, 0.5);
            const fs::path marker = fs::path(cont.output_dir) / "result.json";
            if (fs::exists(marker)) {
                json j;
                std::ifstream(marker) >> j;
                ap50 = j["ap50"].get<double>();
            } else {
                Trainer trainer(cont);
                auto res = trainer.train(run.ckpt);
                auto ev = trainer.evaluate("val");
                ap50 = std::max(res.best_ap50, ev.ap.ap50.value_or(0.0));
                json j;
                j["ap50"] = ap50;
                j["epochs_trained"] = res.last_epoch;
                std::ofstream(marker, std::ios::trunc) << j.dump(2);
            }
        }
        std::cout << "  seed " << seed << ": AP50 " << ap50 << "\n";
        out.detail += "; seed" + std::to_string(seed) + " AP50 " + std::to_string(ap50);
        if (ap50 >= 0.5) ++passed;
    }
    out.require(passed >= 2,
                "convergence reached on " + std::to_string(passed) + "/3 seeds");
    return out;
}

// ---------------------------------------------------------------- criterion 7

Outcome criterion7() {
    Outcome out;
    const int epochs = ablation_epochs();

    // per-seed eval with stage fading at IoU > 0.5
    auto fading_at_05 = [&](const CachedRun& run) {
        RunConfig cfg = run.cfg;
        Trainer trainer(cfg);
        load_checkpoint(run.ckpt, trainer.model, nullptr);
        auto ev = trainer.evaluate("val");
        double tp_f = 0;
        for (const auto& f : ev.fading)
            if (f.tau == 0.5) tp_f = f.tp_f_rate;
        return std::pair<double, double>{tp_f, ev.ap.ap50.value_or(0.0)};
    };

    int sqr_direction_ok = 0, gape_direction_ok = 0;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
        auto sqr2 = ensure_trained("sqr2", seed, SqrVariant::II, true, epochs, -1);
        auto base = ensure_trained("base", seed, SqrVariant::Baseline, true, epochs, -1);
        auto nogape = ensure_trained("nogape", seed, SqrVariant::II, false, epochs, -1);

        auto [tp_f_sqr, ap_sqr] = fading_at_05(sqr2);
        auto [tp_f_base, ap_base_unused] = fading_at_05(base);
        const double ap_nogape = nogape.ap50;

        const bool sqr_ok = tp_f_sqr <= tp_f_base;
        const bool gape_ok = sqr2.ap50 >= ap_nogape;
        sqr_direction_ok += sqr_ok;
        gape_direction_ok += gape_ok;
        std::cout << "  seed " << seed << ": TP-F(sqr2) " << tp_f_sqr << (sqr_ok ? " <= " : " > ")
                  << "TP-F(base) " << tp_f_base << "; AP50(gape) " << sqr2.ap50
                  << (gape_ok ? " >= " : " < ") << "AP50(no-gape) " << ap_nogape << "\n";
        out.detail += "; seed" + std::to_string(seed) + " tp_f " + std::to_string(tp_f_sqr) +
                      "/" + std::to_string(tp_f_base) + " ap " + std::to_string(sqr2.ap50) +
                      "/" + std::to_string(ap_nogape);
        (void)ap_sqr;
        (void)ap_base_unused;
    }
    // a failed direction on one seed is logged above, not fatal; failure on
    // every seed fails acceptance
    out.require(sqr_direction_ok >= 1, "TP-F direction failed on all seeds");
    out.require(gape_direction_ok >= 1, "GAPE direction failed on all seeds");
    out.detail += "; directions " + std::to_string(sqr_direction_ok) + "/3 sqr, " +
                  std::to_string(gape_direction_ok) + "/3 gape";
    return out;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion8() {
    Outcome out;
    auto tiny_cfg = [&](const std::string& name, uint64_t seed) {
        RunConfig cfg;
        cfg.model = tiny_model_config();
        cfg.dataset.synthetic.image_size = 64;
        cfg.dataset.synthetic.num_objects_min = 1;
        cfg.dataset.synthetic.num_objects_max = 3;
        cfg.dataset.image_size = 64;
        cfg.dataset.train_size = 8;
        cfg.dataset.val_size = 4;
        cfg.optim.epochs = 2;
        cfg.optim.batch_size = 4;
        cfg.seed = seed;
        cfg.output_dir = (fs::path(cache_dir()) / ("c8_" + name)).string();
        return cfg;
    };

    // bitwise-identical loss curves
    {
        Trainer a(tiny_cfg("det_a", 5));
        auto ra = a.train();
        Trainer b(tiny_cfg("det_b", 5));
        auto rb = b.train();
        bool same = ra.step_losses.size() == rb.step_losses.size();
        for (size_t i = 0; same && i < ra.step_losses.size(); ++i)
            same = ra.step_losses[i] == rb.step_losses[i];
        out.require(same, "loss curves not bitwise identical");
    }

    // checkpoint resume equivalence
    {
        Trainer full(tiny_cfg("resume_full", 7));
        auto rf = full.train();
        RunConfig part = tiny_cfg("resume_part", 7);
        part.optim.epochs = 1;
        Trainer p(part);
        p.train();
        Trainer cont(tiny_cfg("resume_cont", 7));
        auto rc = cont.train((fs::path(part.output_dir) / "last.ckpt").string());
        bool same = rc.step_losses.size() * 2 == rf.step_losses.size();
        for (size_t i = 0; same && i < rc.step_losses.size(); ++i)
            same = rc.step_losses[i] == rf.step_losses[rf.step_losses.size() / 2 + i];
        auto pa = full.model.named_parameters();
        auto pb = cont.model.named_parameters();
        for (size_t i = 0; same && i < pa.size(); ++i)
            same = hegs_test::bitwise_equal(pa[i].second, pb[i].second);
        out.require(same, "resume diverged from the uninterrupted run");
    }

    // config and checkpoint round trips are fixed points
    {
        RunConfig cfg = tiny_cfg("roundtrip", 9);
        std::string s1 = serialize_run_config(cfg);
        std::string s2 = serialize_run_config(parse_run_config(s1));
        out.require(s1 == s2, "config round trip not a fixed point");

        nn::HegsDetr model(cfg.model, cfg.seed);
        Adam opt(model.named_parameters(), AdamConfig{});
        CheckpointMeta meta;
        meta.config_json = s1;
        const std::string p1 = (fs::path(cache_dir()) / "c8_rt1.ckpt").string();
        const std::string p2 = (fs::path(cache_dir()) / "c8_rt2.ckpt").string();
        fs::create_directories(cache_dir());
        save_checkpoint(p1, model, &opt, meta);
        nn::HegsDetr model2(cfg.model, 999);
        Adam opt2(model2.named_parameters(), AdamConfig{});
        auto back = load_checkpoint(p1, model2, &opt2);
        save_checkpoint(p2, model2, &opt2, back);
        std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
        std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
        std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
        out.require(b1 == b2, "checkpoint round trip not byte-identical");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    bool do_train = false;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            criterion = std::atoi(argv[++i]);
        } else if (std::strcmp(argv[i], "--train-models") == 0) {
            do_train = true;
        } else {
            std::cerr << "usage: hegs_acceptance [--criterion N] [--train-models]\n";
            return 2;
        }
    }

    try {
        if (do_train) return train_models();

        using Fn = Outcome (*)();
        const std::pair<int, Fn> all[] = {{1, criterion1}, {2, criterion2}, {3, criterion3},
                                          {4, criterion4}, {5, criterion5}, {6, criterion6},
                                          {7, criterion7}, {8, criterion8}};
        const char* names[] = {
            "invariant suite (bijection, realness, softmax rows, residual identity, box range)",
            "gradient checks vs central finite differences",
            "oracle equivalence (assignment, AP protocol, branch/wiring transcriptions)",
            "query-recollection structure and inference invariance",
            "attention-map aggregation identities",
            "desk-scale convergence (AP50 >= 0.5, 2 of 3 seeds)",
            "directional ablations (TP-fading and positional-encoding directions)",
            "determinism, resume equivalence and round-trip persistence",
        };

        bool all_pass = true;
        for (const auto& [num, fn] : all) {
            if (criterion != 0 && criterion != num) continue;
            Outcome out = fn();
            all_pass = all_pass && out.pass;
            std::cout << (out.pass ? "[PASS]" : "[FAIL]") << " criterion " << num << ": "
                      << names[num - 1]
                      << (out.detail.empty() ? "" : "  [" + out.detail + "]") << "\n";
        }
        return all_pass ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "acceptance run aborted: " << e.what() << "\n";
        return 1;
    }
}
