#include "hegs/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

namespace hegs {

namespace fs = std::filesystem;
using nlohmann::json;

Trainer::Trainer(const RunConfig& config) : cfg(config) {
    cfg.validate();
    out_dir = resolve_output_dir(cfg);
    fs::create_directories(out_dir);

    model = nn::HegsDetr(cfg.model, cfg.seed);
    AdamConfig ac;
    ac.lr = cfg.optim.lr;
    ac.weight_decay = cfg.optim.weight_decay;
    ac.grad_clip = cfg.optim.grad_clip;
    ac.beta1 = cfg.optim.beta1;
    ac.beta2 = cfg.optim.beta2;
    ac.eps = cfg.optim.eps;
    optim = Adam(model.named_parameters(), ac);

    train_set_ = load_split("train");
    val_set_ = load_split("val");
}

std::vector<DetectionSample> Trainer::load_split(const std::string& split) const {
    HEGS_CHECK(split == "train" || split == "val", "split must be train or val");
    std::vector<DetectionSample> out;
    if (cfg.dataset.kind == "synthetic") {
        const int64_t base = split == "train" ? 0 : cfg.dataset.train_size;
        const int64_t count = split == "train" ? cfg.dataset.train_size : cfg.dataset.val_size;
        out.reserve(count);
        for (int64_t i = 0; i < count; ++i)
            out.push_back(generate_synthetic_scene(cfg.dataset.synthetic, base + i));
    } else {
        const std::string& path =
            split == "train" ? cfg.dataset.coco_train_json : cfg.dataset.coco_val_json;
        CocoDataset ds = load_coco_annotations(path);
        for (const auto& entry : ds.images) {
            DetectionSample s;
            s.image = load_sample_image(entry);
            s.gt = entry.gt;
            s.image_id = entry.id;
            s.width = entry.width;
            s.height = entry.height;
            out.push_back(resize_and_pad(s, cfg.dataset.image_size).sample);
        }
    }
    return out;
}

std::vector<int64_t> Trainer::epoch_order(int64_t epoch) const {
    std::vector<int64_t> order(train_set_.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    Rng rng(Rng::derive(cfg.seed, /*stream=*/21, static_cast<uint64_t>(epoch)));
    for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_int(0, i)]);
    return order;
}

double Trainer::lr_at(int64_t step, int64_t total_steps) const {
    double lr = cfg.optim.lr;
    if (cfg.optim.warmup_steps > 0 && step < cfg.optim.warmup_steps)
        return lr * static_cast<double>(step + 1) / cfg.optim.warmup_steps;
    if (cfg.optim.cosine_schedule && total_steps > 0) {
        const double progress =
            static_cast<double>(step - cfg.optim.warmup_steps) /
            std::max<int64_t>(1, total_steps - cfg.optim.warmup_steps);
        lr *= 0.5 * (1.0 + std::cos(3.141592653589793 * std::min(1.0, progress)));
    }
    return lr;
}

void Trainer::log_line(const std::string& line) {
    if (log_.is_open()) log_ << line << "\n" << std::flush;
}

TrainResult Trainer::train(const std::string& resume_path) {
    TrainResult res;
    int64_t start_epoch = 0;
    int64_t global_step = 0;
    double best_ap50 = 0.0;

    if (!resume_path.empty()) {
        CheckpointMeta meta = load_checkpoint(resume_path, model, &optim);
        start_epoch = meta.epoch;
        global_step = meta.global_step;
        best_ap50 = meta.best_ap50;
    }

    log_.open(fs::path(out_dir) / "train_log.jsonl", std::ios::app);
    const std::string config_snapshot = serialize_run_config(cfg);
    {
        std::ofstream cfg_out(fs::path(out_dir) / "config.json", std::ios::trunc);
        cfg_out << config_snapshot;
    }

    SqrOptions sqr;
    sqr.variant = cfg.sqr_variant;
    sqr.recollected_weight = cfg.recollected_weight;

    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train_set_.size()) + cfg.optim.batch_size - 1) /
        cfg.optim.batch_size;
    const int64_t total_steps = steps_per_epoch * cfg.optim.epochs;

    model.set_training(true);
    for (int64_t epoch = start_epoch; epoch < cfg.optim.epochs; ++epoch) {
        auto order = epoch_order(epoch);
        for (int64_t s = 0; s < steps_per_epoch; ++s) {
            const int64_t begin = s * cfg.optim.batch_size;
            const int64_t end =
                std::min<int64_t>(order.size(), begin + cfg.optim.batch_size);
            std::vector<DetectionSample> batch;
            std::vector<GtInstances> gts;
            Rng flip_rng(Rng::derive(cfg.seed, /*stream=*/22,
                                     static_cast<uint64_t>(epoch * steps_per_epoch + s)));
            for (int64_t i = begin; i < end; ++i) {
                DetectionSample sample = train_set_[order[i]];
                const bool flip = flip_rng.uniform() < 0.5;  // stream advances either way
                if (cfg.dataset.flip_augment && flip) sample = flip_horizontal(sample);
                batch.push_back(std::move(sample));
                gts.push_back(batch.back().gt);
            }
            Tensor images = stack_images(batch);

            optim.cfg.lr = lr_at(global_step, total_steps);
            auto loss = sqr_training_loss(model, images, gts, sqr);
            const double total = loss.total_value();

            if (!std::isfinite(total)) {
                // dump diagnostics and an emergency checkpoint, then abort
                json diag;
                diag["type"] = "nonfinite_abort";
                diag["epoch"] = epoch;
                diag["step_in_epoch"] = s;
                json ids = json::array();
                for (int64_t i = begin; i < end; ++i) ids.push_back(order[i]);
                diag["batch_sample_indices"] = ids;
                log_line(diag.dump());
                CheckpointMeta meta;
                meta.epoch = epoch;
                meta.global_step = global_step;
                meta.config_json = config_snapshot;
                save_checkpoint((fs::path(out_dir) / "abort.ckpt").string(), model, &optim,
                                meta);
                res.aborted_nonfinite = true;
                res.abort_epoch = epoch;
                res.abort_step = s;
                return res;
            }

            optim.zero_grad();
            Tensor t = loss.total;
            t.backward();
            const double grad_norm = optim.step();

            json rec;
            rec["schema_version"] = 1;
            rec["type"] = "train_step";
            rec["step"] = global_step;
            rec["epoch"] = epoch;
            rec["loss_total"] = total;
            rec["loss_cls"] = loss.classification();
            rec["loss_l1"] = loss.box_l1();
            rec["loss_giou"] = loss.giou();
            rec["grad_norm"] = grad_norm;
            rec["lr"] = optim.cfg.lr;
            log_line(rec.dump());
            res.step_losses.push_back(total);
            ++global_step;
        }

        res.last_epoch = epoch + 1;
        CheckpointMeta meta;
        meta.epoch = epoch + 1;
        meta.global_step = global_step;
        meta.config_json = config_snapshot;
        meta.best_ap50 = best_ap50;
        res.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
        save_checkpoint(res.last_checkpoint, model, &optim, meta);

        const bool eval_now =
            cfg.eval_interval > 0 && ((epoch + 1) % cfg.eval_interval == 0 ||
                                      epoch + 1 == cfg.optim.epochs);
        if (eval_now) {
            model.set_training(false);
            EvalOutputs ev = evaluate("val");
            model.set_training(true);
            const double ap50 = ev.ap.ap50.value_or(0.0);
            json rec;
            rec["schema_version"] = 1;
            rec["type"] = "eval";
            rec["epoch"] = epoch + 1;
            rec["ap50"] = ap50;
            rec["ap"] = ev.ap.ap.value_or(0.0);
            log_line(rec.dump());
            if (ap50 > best_ap50) {
                best_ap50 = ap50;
                res.best_epoch = epoch + 1;
                meta.best_ap50 = best_ap50;
                res.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
                save_checkpoint(res.best_checkpoint, model, &optim, meta);
            }
            if (cfg.early_stop_ap50 > 0 && ap50 >= cfg.early_stop_ap50) {
                res.early_stopped_epoch = epoch + 1;
                break;
            }
        }
    }
    res.best_ap50 = best_ap50;
    model.set_training(false);
    return res;
}

EvalOutputs evaluate_model(const nn::HegsDetr& model,
                           const std::vector<DetectionSample>& samples, int batch_size,
                           double score_floor) {
    std::vector<Detection> dets;
    std::vector<EvalGtBox> gts;
    // flattened per-stage predictions over the whole split for fading analysis
    const int num_stages = model.cfg.decoder.num_stages;
    std::vector<std::vector<Tensor>> stage_logits(num_stages), stage_boxes(num_stages);
    std::vector<GtInstances> all_gt;

    for (size_t begin = 0; begin < samples.size(); begin += batch_size) {
        const size_t end = std::min(samples.size(), begin + batch_size);
        std::vector<DetectionSample> batch(samples.begin() + begin, samples.begin() + end);
        Tensor images = stack_images(batch);
        auto inf = inference_forward(model, images);

        for (size_t i = 0; i < batch.size(); ++i) {
            const auto& s = batch[i];
            auto d = postprocess_topk(inf.final_stage(), static_cast<int64_t>(i), s.image_id,
                                      s.width);
            dets.insert(dets.end(), d.begin(), d.end());
            for (size_t g = 0; g < s.gt.size(); ++g) {
                EvalGtBox gb;
                gb.image_id = s.image_id;
                gb.cls = s.gt.labels[g];
                const auto& b = s.gt.boxes[g];
                gb.box = {(b[0] - b[2] / 2) * s.width, (b[1] - b[3] / 2) * s.height,
                          (b[0] + b[2] / 2) * s.width, (b[1] + b[3] / 2) * s.height};
                gb.area = b[2] * s.width * b[3] * s.height;
                gts.push_back(gb);
            }
            all_gt.push_back(s.gt);
        }
        for (int st = 0; st < num_stages; ++st) {
            stage_logits[st].push_back(inf.stages[st].logits.detach());
            stage_boxes[st].push_back(inf.stages[st].boxes.detach());
        }
    }

    EvalOutputs out;
    out.ap = average_precision(dets, gts);

    std::vector<StagePredictions> merged(num_stages);
    for (int st = 0; st < num_stages; ++st) {
        merged[st].logits = ops::concat(stage_logits[st], 0);
        merged[st].boxes = ops::concat(stage_boxes[st], 0);
        merged[st].stage_index = st + 1;
    }
    for (double tau : {0.25, 0.5, 0.75}) {
        auto flags = stage_matchings(merged, all_gt, tau, score_floor);
        FadingReport fr;
        fr.tau = tau;
        fr.reference = "1&2";
        fr.tp_f_rate = tp_fading_rate(flags, {1, 2});
        fr.fp_e_rate = fp_exacerbation_rate(flags, {1, 2});
        out.fading.push_back(fr);
    }
    return out;
}

EvalOutputs Trainer::evaluate(const std::string& split) {
    const bool was_training = model.training();
    model.set_training(false);
    const auto& samples = split == "train" ? train_set_ : val_set_;
    auto out = evaluate_model(model, samples, cfg.optim.batch_size, cfg.score_floor);
    model.set_training(was_training);
    return out;
}

} // namespace hegs
