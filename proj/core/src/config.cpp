#include "hegs/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace hegs {

using nlohmann::json;

RunConfig RunConfig::desk_profile() {
    RunConfig cfg;  // struct defaults are the desk profile
    // 128px maps are 16x16 at the fusion stride: the receptive field of the
    // large branch saturates, so the small-map kernel applies
    cfg.model.neck.large_kernel = 7;
    return cfg;
}

RunConfig RunConfig::paper_profile() {
    RunConfig cfg;
    cfg.model.backbone.stem_channels = 32;
    cfg.model.backbone.stage_channels = {64, 128, 256, 512};
    cfg.model.backbone.attention_heads = 8;
    cfg.model.neck.hidden_dim = 256;
    cfg.model.neck.aifi_heads = 8;
    cfg.model.neck.aifi_ffn_dim = 1024;
    cfg.model.neck.large_kernel = 31;
    cfg.model.neck.repblock_depth = 3;
    cfg.model.decoder.hidden_dim = 256;
    cfg.model.decoder.heads = 8;
    cfg.model.decoder.num_queries = 300;
    cfg.model.decoder.num_classes = 10;
    cfg.model.decoder.ffn_dim = 1024;
    cfg.dataset.kind = "coco";
    cfg.dataset.image_size = 640;
    cfg.optim.lr = 1e-4;
    cfg.optim.weight_decay = 1e-4;
    cfg.optim.epochs = 300;
    cfg.optim.batch_size = 16;
    return cfg;
}

void RunConfig::validate(bool check_paths) const {
    model.validate();
    HEGS_CHECK(optim.lr > 0, "learning rate must be positive");
    HEGS_CHECK(optim.epochs >= 1, "epochs must be >= 1");
    HEGS_CHECK(optim.batch_size >= 1, "batch size must be >= 1");
    HEGS_CHECK(dataset.image_size % 32 == 0, "dataset image size must be divisible by 32");
    if (dataset.kind == "synthetic") {
        dataset.synthetic.validate();
        HEGS_CHECK(dataset.train_size >= 1 && dataset.val_size >= 1,
                   "synthetic split sizes must be positive");
        HEGS_CHECK(dataset.synthetic.num_classes == model.decoder.num_classes,
                   "dataset classes " << dataset.synthetic.num_classes
                                      << " != model classes " << model.decoder.num_classes);
    } else if (dataset.kind == "coco") {
        if (check_paths) {
            HEGS_CHECK(std::filesystem::exists(dataset.coco_train_json),
                       "missing train annotations: " << dataset.coco_train_json);
            HEGS_CHECK(std::filesystem::exists(dataset.coco_val_json),
                       "missing val annotations: " << dataset.coco_val_json);
        }
    } else {
        throw Error("unknown dataset kind: " + dataset.kind);
    }
}

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["profile"] = "custom";  // fully explicit dump; no preset needed to reload
    json& b = j["model"]["backbone"];
    b["stem_channels"] = c.model.backbone.stem_channels;
    b["stage_channels"] = c.model.backbone.stage_channels;
    b["blocks_per_stage"] = c.model.backbone.blocks_per_stage;
    b["fca_stages"] = std::vector<int>(c.model.backbone.fca_stages.begin(),
                                       c.model.backbone.fca_stages.end());
    b["attention_heads"] = c.model.backbone.attention_heads;
    json& n = j["model"]["neck"];
    n["hidden_dim"] = c.model.neck.hidden_dim;
    n["aifi_heads"] = c.model.neck.aifi_heads;
    n["aifi_ffn_dim"] = c.model.neck.aifi_ffn_dim;
    n["large_kernel"] = c.model.neck.large_kernel;
    n["repblock_depth"] = c.model.neck.repblock_depth;
    n["use_cokblock"] = c.model.neck.use_cokblock;
    json& d = j["model"]["decoder"];
    d["num_stages"] = c.model.decoder.num_stages;
    d["num_queries"] = c.model.decoder.num_queries;
    d["hidden_dim"] = c.model.decoder.hidden_dim;
    d["heads"] = c.model.decoder.heads;
    d["sampling_points"] = c.model.decoder.sampling_points;
    d["num_levels"] = c.model.decoder.num_levels;
    d["num_classes"] = c.model.decoder.num_classes;
    d["ffn_dim"] = c.model.decoder.ffn_dim;
    d["use_gape"] = c.model.decoder.use_gape;

    j["sqr_variant"] = to_string(c.sqr_variant);

    json& ds = j["dataset"];
    ds["kind"] = c.dataset.kind;
    ds["image_size"] = c.dataset.image_size;
    ds["train_size"] = c.dataset.train_size;
    ds["val_size"] = c.dataset.val_size;
    ds["coco_train_json"] = c.dataset.coco_train_json;
    ds["coco_val_json"] = c.dataset.coco_val_json;
    ds["flip_augment"] = c.dataset.flip_augment;
    json& sy = ds["synthetic"];
    sy["image_size"] = c.dataset.synthetic.image_size;
    sy["num_objects_min"] = c.dataset.synthetic.num_objects_min;
    sy["num_objects_max"] = c.dataset.synthetic.num_objects_max;
    sy["object_px_min"] = c.dataset.synthetic.object_px_min;
    sy["object_px_max"] = c.dataset.synthetic.object_px_max;
    sy["num_classes"] = c.dataset.synthetic.num_classes;
    sy["clutter_density"] = c.dataset.synthetic.clutter_density;
    sy["occlusion_prob"] = c.dataset.synthetic.occlusion_prob;
    sy["seed"] = c.dataset.synthetic.seed;

    json& o = j["optim"];
    o["lr"] = c.optim.lr;
    o["weight_decay"] = c.optim.weight_decay;
    o["grad_clip"] = c.optim.grad_clip;
    o["beta1"] = c.optim.beta1;
    o["beta2"] = c.optim.beta2;
    o["eps"] = c.optim.eps;
    o["epochs"] = c.optim.epochs;
    o["batch_size"] = c.optim.batch_size;
    o["cosine_schedule"] = c.optim.cosine_schedule;
    o["warmup_steps"] = c.optim.warmup_steps;

    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["eval_interval"] = c.eval_interval;
    j["recollected_weight"] = c.recollected_weight;
    j["early_stop_ap50"] = c.early_stop_ap50;
    j["score_floor"] = c.score_floor;
    return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void from_json(const json& j, RunConfig& c) {
    if (j.contains("model")) {
        const json& m = j["model"];
        if (m.contains("backbone")) {
            const json& b = m["backbone"];
            maybe(b, "stem_channels", c.model.backbone.stem_channels);
            maybe(b, "stage_channels", c.model.backbone.stage_channels);
            maybe(b, "blocks_per_stage", c.model.backbone.blocks_per_stage);
            if (b.contains("fca_stages")) {
                auto v = b["fca_stages"].get<std::vector<int>>();
                c.model.backbone.fca_stages = std::set<int>(v.begin(), v.end());
            }
            maybe(b, "attention_heads", c.model.backbone.attention_heads);
        }
        if (m.contains("neck")) {
            const json& n = m["neck"];
            maybe(n, "hidden_dim", c.model.neck.hidden_dim);
            maybe(n, "aifi_heads", c.model.neck.aifi_heads);
            maybe(n, "aifi_ffn_dim", c.model.neck.aifi_ffn_dim);
            maybe(n, "large_kernel", c.model.neck.large_kernel);
            maybe(n, "repblock_depth", c.model.neck.repblock_depth);
            maybe(n, "use_cokblock", c.model.neck.use_cokblock);
        }
        if (m.contains("decoder")) {
            const json& d = m["decoder"];
            maybe(d, "num_stages", c.model.decoder.num_stages);
            maybe(d, "num_queries", c.model.decoder.num_queries);
            maybe(d, "hidden_dim", c.model.decoder.hidden_dim);
            maybe(d, "heads", c.model.decoder.heads);
            maybe(d, "sampling_points", c.model.decoder.sampling_points);
            maybe(d, "num_levels", c.model.decoder.num_levels);
            maybe(d, "num_classes", c.model.decoder.num_classes);
            maybe(d, "ffn_dim", c.model.decoder.ffn_dim);
            maybe(d, "use_gape", c.model.decoder.use_gape);
        }
    }
    if (j.contains("sqr_variant"))
        c.sqr_variant = sqr_variant_from_string(j["sqr_variant"].get<std::string>());
    if (j.contains("dataset")) {
        const json& ds = j["dataset"];
        maybe(ds, "kind", c.dataset.kind);
        maybe(ds, "image_size", c.dataset.image_size);
        maybe(ds, "train_size", c.dataset.train_size);
        maybe(ds, "val_size", c.dataset.val_size);
        maybe(ds, "coco_train_json", c.dataset.coco_train_json);
        maybe(ds, "coco_val_json", c.dataset.coco_val_json);
        maybe(ds, "flip_augment", c.dataset.flip_augment);
        if (ds.contains("synthetic")) {
            const json& sy = ds["synthetic"];
            maybe(sy, "image_size", c.dataset.synthetic.image_size);
            maybe(sy, "num_objects_min", c.dataset.synthetic.num_objects_min);
            maybe(sy, "num_objects_max", c.dataset.synthetic.num_objects_max);
            maybe(sy, "object_px_min", c.dataset.synthetic.object_px_min);
            maybe(sy, "object_px_max", c.dataset.synthetic.object_px_max);
            maybe(sy, "num_classes", c.dataset.synthetic.num_classes);
            maybe(sy, "clutter_density", c.dataset.synthetic.clutter_density);
            maybe(sy, "occlusion_prob", c.dataset.synthetic.occlusion_prob);
            maybe(sy, "seed", c.dataset.synthetic.seed);
        }
    }
    if (j.contains("optim")) {
        const json& o = j["optim"];
        maybe(o, "lr", c.optim.lr);
        maybe(o, "weight_decay", c.optim.weight_decay);
        maybe(o, "grad_clip", c.optim.grad_clip);
        maybe(o, "beta1", c.optim.beta1);
        maybe(o, "beta2", c.optim.beta2);
        maybe(o, "eps", c.optim.eps);
        maybe(o, "epochs", c.optim.epochs);
        maybe(o, "batch_size", c.optim.batch_size);
        maybe(o, "cosine_schedule", c.optim.cosine_schedule);
        maybe(o, "warmup_steps", c.optim.warmup_steps);
    }
    maybe(j, "seed", c.seed);
    maybe(j, "output_dir", c.output_dir);
    maybe(j, "eval_interval", c.eval_interval);
    maybe(j, "recollected_weight", c.recollected_weight);
    maybe(j, "early_stop_ap50", c.early_stop_ap50);
    maybe(j, "score_floor", c.score_floor);
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw Error(std::string("config is not valid JSON: ") + e.what());
    }
    std::string profile = "desk";
    if (j.contains("profile")) profile = j["profile"].get<std::string>();
    RunConfig cfg;
    if (profile == "desk" || profile == "custom") {
        cfg = RunConfig::desk_profile();
    } else if (profile == "paper") {
        cfg = RunConfig::paper_profile();
    } else {
        throw Error("unknown profile: " + profile);
    }
    from_json(j, cfg);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    HEGS_CHECK(in.good(), "cannot open config " << path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string serialize_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2); }

std::string resolve_output_dir(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::path p = cfg.output_dir;
    const char* root = std::getenv("HEGS_OUTPUT_ROOT");
    if (root && *root && p.is_relative()) p = fs::path(root) / p;
    return p.string();
}

} // namespace hegs
