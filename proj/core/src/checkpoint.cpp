#include "hegs/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hegs {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'E', 'G', 'S', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

json manifest_of(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    json arr = json::array();
    for (const auto& [name, t] : tensors) {
        json e;
        e["name"] = name;
        e["shape"] = t.shape();
        arr.push_back(e);
    }
    return arr;
}

void write_doubles(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()), t.numel() * 8);
}

void read_doubles(std::ifstream& in, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data()), t.numel() * 8);
    HEGS_CHECK(in.good(), "checkpoint truncated while reading tensor data");
}

} // namespace

void save_checkpoint(const std::string& path, nn::Module& model, const Adam* optim,
                     const CheckpointMeta& meta) {
    auto params = model.named_parameters();
    auto buffers = model.named_buffers();

    json header;
    header["format_version"] = kVersion;
    header["epoch"] = meta.epoch;
    header["rng_epoch_cursor"] = meta.rng_epoch_cursor;
    header["config"] = meta.config_json;
    header["best_ap50"] = meta.best_ap50;
    header["global_step"] = meta.global_step;
    header["params"] = manifest_of(params);
    header["buffers"] = manifest_of(buffers);
    if (optim) {
        header["optim"]["t"] = optim->t;
        header["optim"]["params"] = manifest_of(optim->params);
    }
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    HEGS_CHECK(out.good(), "cannot write checkpoint " << path);
    out.write(kMagic, 8);
    const uint32_t ver = kVersion;
    out.write(reinterpret_cast<const char*>(&ver), 4);
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(htext.data(), htext.size());
    for (auto& [name, t] : params) write_doubles(out, t);
    for (auto& [name, t] : buffers) write_doubles(out, t);
    if (optim) {
        for (const auto& t : optim->m) write_doubles(out, t);
        for (const auto& t : optim->v) write_doubles(out, t);
    }
    HEGS_CHECK(out.good(), "checkpoint write failed: " << path);
}

namespace {

json read_header(std::ifstream& in, const std::string& path) {
    char magic[8];
    in.read(magic, 8);
    HEGS_CHECK(in.good() && std::memcmp(magic, kMagic, 8) == 0,
               "not a checkpoint file: " << path);
    uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), 4);
    HEGS_CHECK(ver == kVersion,
               "checkpoint version " << ver << " incompatible with " << kVersion);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    HEGS_CHECK(in.good(), "checkpoint header truncated: " << path);
    return json::parse(htext);
}

CheckpointMeta meta_from(const json& header) {
    CheckpointMeta meta;
    meta.format_version = header["format_version"].get<int>();
    meta.epoch = header["epoch"].get<int64_t>();
    meta.rng_epoch_cursor = header["rng_epoch_cursor"].get<uint64_t>();
    meta.config_json = header["config"].get<std::string>();
    meta.best_ap50 = header.value("best_ap50", 0.0);
    meta.global_step = header.value("global_step", int64_t{0});
    return meta;
}

// Compares a stored manifest against live tensors; throws with the full list
// of mismatches.
void check_manifest(const json& manifest,
                    const std::vector<std::pair<std::string, Tensor>>& tensors,
                    const char* what) {
    std::ostringstream diff;
    size_t bad = 0;
    const size_t n = std::max(manifest.size(), tensors.size());
    for (size_t i = 0; i < n; ++i) {
        std::string stored_name = i < manifest.size() ? manifest[i]["name"].get<std::string>()
                                                      : "<missing>";
        Shape stored_shape;
        if (i < manifest.size()) stored_shape = manifest[i]["shape"].get<Shape>();
        std::string live_name = i < tensors.size() ? tensors[i].first : "<missing>";
        Shape live_shape = i < tensors.size() ? tensors[i].second.shape() : Shape{};
        if (stored_name != live_name || stored_shape != live_shape) {
            ++bad;
            diff << "\n  " << what << "[" << i << "]: checkpoint " << stored_name
                 << shape_str(stored_shape) << " vs model " << live_name
                 << shape_str(live_shape);
        }
    }
    if (bad > 0)
        throw Error("checkpoint/model mismatch (" + std::to_string(bad) + " tensors):" +
                    diff.str());
}

} // namespace

CheckpointMeta load_checkpoint(const std::string& path, nn::Module& model, Adam* optim) {
    std::ifstream in(path, std::ios::binary);
    HEGS_CHECK(in.good(), "cannot open checkpoint " << path);
    json header = read_header(in, path);

    auto params = model.named_parameters();
    auto buffers = model.named_buffers();
    check_manifest(header["params"], params, "param");
    check_manifest(header["buffers"], buffers, "buffer");
    if (optim) {
        HEGS_CHECK(header.contains("optim"),
                   "checkpoint has no optimizer state but resume requested");
        check_manifest(header["optim"]["params"], optim->params, "optim");
    }

    for (auto& [name, t] : params) read_doubles(in, t);
    for (auto& [name, t] : buffers) read_doubles(in, t);
    if (optim) {
        optim->t = header["optim"]["t"].get<int64_t>();
        for (auto& t : optim->m) read_doubles(in, t);
        for (auto& t : optim->v) read_doubles(in, t);
    }
    return meta_from(header);
}

CheckpointMeta peek_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    HEGS_CHECK(in.good(), "cannot open checkpoint " << path);
    return meta_from(read_header(in, path));
}

} // namespace hegs
