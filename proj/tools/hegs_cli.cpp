// Command-line entry point: training, evaluation, analysis exports, plot
// rendering and the fast invariant selftest.
//
// Exit codes: 0 ok, 1 invariant/selftest failure, 2 usage error,
// 3 numeric abort during training.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hegs/analyze.hpp"
#include "hegs/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

hegs::RunConfig config_for_checkpoint(const std::string& config_path,
                                      const std::string& ckpt_path) {
    // CLI config wins; fall back on the snapshot stored in the checkpoint
    if (!config_path.empty()) return hegs::load_run_config(config_path);
    auto meta = hegs::peek_checkpoint(ckpt_path);
    return hegs::parse_run_config(meta.config_json);
}

int cmd_train(const std::string& config_path, const std::string& resume) {
    hegs::RunConfig cfg = hegs::load_run_config(config_path);
    hegs::Trainer trainer(cfg);
    auto res = trainer.train(resume);
    if (res.aborted_nonfinite) {
        std::cerr << "training aborted: non-finite loss at epoch " << res.abort_epoch
                  << " step " << res.abort_step << "; see abort.ckpt and train_log.jsonl in "
                  << trainer.out_dir << "\n";
        return 3;
    }
    auto ev = trainer.evaluate("val");
    std::ofstream(fs::path(trainer.out_dir) / "ap_report.json") << ev.ap.to_json();
    std::cout << "trained " << res.last_epoch << " epochs; best AP50 " << res.best_ap50;
    if (res.early_stopped_epoch >= 0)
        std::cout << " (early stop at epoch " << res.early_stopped_epoch << ")";
    std::cout << "\noutputs in " << trainer.out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt,
             const std::string& split) {
    hegs::RunConfig cfg = config_for_checkpoint(config_path, ckpt);
    hegs::Trainer trainer(cfg);
    hegs::load_checkpoint(ckpt, trainer.model, nullptr);
    auto ev = trainer.evaluate(split);

    fs::path dir = trainer.out_dir;
    fs::create_directories(dir);
    std::ofstream(dir / ("ap_report_" + split + ".json")) << ev.ap.to_json();
    json fj = json::array();
    for (const auto& f : ev.fading) {
        json row;
        row["tau"] = f.tau;
        row["reference"] = f.reference;
        row["tp_f_rate"] = f.tp_f_rate;
        row["fp_e_rate"] = f.fp_e_rate;
        fj.push_back(row);
    }
    std::ofstream(dir / ("fading_report_" + split + ".json")) << fj.dump(2);

    std::cout << ev.ap.to_json() << "\n";
    for (const auto& f : ev.fading)
        std::cout << "fading tau=" << f.tau << " ref=" << f.reference
                  << " tp_f=" << f.tp_f_rate << " fp_e=" << f.fp_e_rate << "\n";
    return 0;
}

int cmd_analyze(const std::string& config_path, const std::string& ckpt,
                const std::string& images, bool plot) {
    hegs::RunConfig cfg = config_for_checkpoint(config_path, ckpt);
    hegs::Trainer trainer(cfg);
    hegs::load_checkpoint(ckpt, trainer.model, nullptr);
    trainer.model.set_training(false);

    // images: comma-separated synthetic val indices, or a directory of files
    std::vector<hegs::DetectionSample> samples;
    if (!images.empty() && fs::is_directory(images)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(images)) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        int64_t id = 0;
        for (const auto& f : files) {
            hegs::CocoImageEntry entry;
            entry.file_name = f.string();
            hegs::DetectionSample s;
            s.image = hegs::load_sample_image(entry);
            s.image_id = id++;
            s.width = s.image.dim(2);
            s.height = s.image.dim(1);
            samples.push_back(hegs::resize_and_pad(s, cfg.dataset.image_size).sample);
        }
    } else {
        auto val = trainer.load_split("val");
        if (images.empty()) {
            samples.assign(val.begin(), val.begin() + std::min<size_t>(4, val.size()));
        } else {
            std::stringstream ss(images);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                const size_t idx = std::stoul(tok);
                HEGS_CHECK(idx < val.size(), "image index " << idx << " out of val split");
                samples.push_back(val[idx]);
            }
        }
    }

    hegs::AnalyzeOptions opts;
    opts.plot = plot;
    auto res = hegs::run_analysis(trainer.model, samples,
                                  (fs::path(trainer.out_dir) / "analysis").string(), opts);
    for (const auto& f : res.files) std::cout << f << "\n";
    return 0;
}

int cmd_plot(const std::string& dir) {
    for (const auto& f : hegs::render_exports(dir)) std::cout << f << "\n";
    return 0;
}

int cmd_selftest(bool corrupt_spd) {
    hegs::ops::set_spd_fault_injection(corrupt_spd);
    auto res = hegs::run_selftest();
    hegs::ops::set_spd_fault_injection(false);
    for (const auto& item : res.items)
        std::cout << (item.pass ? "[PASS] " : "[FAIL] ") << item.name
                  << (item.detail.empty() ? "" : "  (" + item.detail + ")") << "\n";
    std::cout << "selftest completed in " << res.seconds << "s\n";
    if (res.seconds > 120.0)
        std::cerr << "warning: selftest exceeded the 2 minute budget\n";
    return res.all_pass() ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hegs: real-time detection transformer workbench"};
    app.require_subcommand(1);

    std::string config_path, resume, ckpt, split = "val", images, plot_dir;
    bool plot = false, corrupt_spd = false;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "run config JSON")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--config", config_path, "run config JSON (default: from checkpoint)");
    eval->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval->add_option("--split", split, "train|val")->check(CLI::IsMember({"train", "val"}));

    auto* analyze = app.add_subcommand("analyze", "export attention maps and sampling records");
    analyze->add_option("--config", config_path, "run config JSON (default: from checkpoint)");
    analyze->add_option("--ckpt", ckpt, "checkpoint path")->required();
    analyze->add_option("--images", images, "directory of images or comma-separated val indices");
    analyze->add_flag("--plot", plot, "also render PPM overlays");

    auto* plot_cmd = app.add_subcommand("plot", "render exported artifacts to PPM images");
    plot_cmd->add_option("dir", plot_dir, "analysis output directory")->required();

    auto* selftest = app.add_subcommand("selftest", "run the fast invariant suite");
    selftest->add_flag("--corrupt-spd", corrupt_spd,
                       "fault-injection hook: break the space-to-depth inverse");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("train")) return cmd_train(config_path, resume);
        if (app.got_subcommand("eval")) return cmd_eval(config_path, ckpt, split);
        if (app.got_subcommand("analyze")) return cmd_analyze(config_path, ckpt, images, plot);
        if (app.got_subcommand("plot")) return cmd_plot(plot_dir);
        if (app.got_subcommand("selftest")) return cmd_selftest(corrupt_spd);
    } catch (const hegs::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
