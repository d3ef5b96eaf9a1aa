#include "vlg/config.hpp"

#include <fstream>

#include <json.hpp>

namespace vlg {

AdapterTrainConfig PipelineConfig::adapter_train_config() const {
    AdapterTrainConfig cfg;
    cfg.alpha = adapter.alpha;
    cfg.hidden = adapter.hidden;
    cfg.lr = adapter.lr;
    cfg.batch_scenes = adapter.batch;
    cfg.decay_factor = adapter.decay;
    cfg.decay_every = adapter.decay_every;
    cfg.epochs = adapter.epochs;
    cfg.temperature = labeling.temperature;
    cfg.seed = seed;
    return cfg;
}

DistillConfig PipelineConfig::distill_config() const {
    DistillConfig cfg;
    cfg.lr = distill.lr;
    cfg.batch_scenes = distill.batch;
    cfg.poly_power = distill.poly_power;
    cfg.iters = distill.iters;
    cfg.temperature = labeling.temperature;
    cfg.pre_widths = distill.pre_widths;
    cfg.post_widths = distill.post_widths;
    cfg.k = distill.k;
    cfg.seed = seed;
    cfg.workers = workers;
    return cfg;
}

PipelineConfig config_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad config JSON: " + std::string(e.what()));
    }
    PipelineConfig c;
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        c.paths.scene_list = p.value("scene_list", c.paths.scene_list);
        c.paths.bank = p.value("bank", c.paths.bank);
        c.paths.out_dir = p.value("out_dir", c.paths.out_dir);
    }
    if (j.contains("geometry")) c.geometry.tau = j["geometry"].value("tau", c.geometry.tau);
    if (j.contains("labeling"))
        c.labeling.temperature = j["labeling"].value("temperature", c.labeling.temperature);
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        c.adapter.alpha = a.value("alpha", c.adapter.alpha);
        c.adapter.hidden = a.value("hidden", c.adapter.hidden);
        c.adapter.lr = a.value("lr", c.adapter.lr);
        c.adapter.batch = a.value("batch", c.adapter.batch);
        c.adapter.decay = a.value("decay", c.adapter.decay);
        c.adapter.decay_every = a.value("decay_every", c.adapter.decay_every);
        c.adapter.epochs = a.value("epochs", c.adapter.epochs);
    }
    if (j.contains("distill")) {
        const auto& d = j["distill"];
        c.distill.mode = d.value("mode", c.distill.mode);
        c.distill.lr = d.value("lr", c.distill.lr);
        c.distill.batch = d.value("batch", c.distill.batch);
        c.distill.poly_power = d.value("poly_power", c.distill.poly_power);
        c.distill.iters = d.value("iters", c.distill.iters);
        c.distill.k = d.value("k", c.distill.k);
        if (d.contains("pre_widths")) c.distill.pre_widths = d["pre_widths"].get<std::vector<int>>();
        if (d.contains("post_widths"))
            c.distill.post_widths = d["post_widths"].get<std::vector<int>>();
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    return c;
}

std::string config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["paths"] = {{"scene_list", c.paths.scene_list},
                  {"bank", c.paths.bank},
                  {"out_dir", c.paths.out_dir}};
    j["geometry"] = {{"tau", c.geometry.tau}};
    j["labeling"] = {{"temperature", c.labeling.temperature}};
    j["adapter"] = {{"alpha", c.adapter.alpha},   {"hidden", c.adapter.hidden},
                    {"lr", c.adapter.lr},         {"batch", c.adapter.batch},
                    {"decay", c.adapter.decay},   {"decay_every", c.adapter.decay_every},
                    {"epochs", c.adapter.epochs}};
    j["distill"] = {{"mode", c.distill.mode},
                    {"lr", c.distill.lr},
                    {"batch", c.distill.batch},
                    {"poly_power", c.distill.poly_power},
                    {"iters", c.distill.iters},
                    {"k", c.distill.k},
                    {"pre_widths", c.distill.pre_widths},
                    {"post_widths", c.distill.post_widths}};
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    return j.dump(2);
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string config_hash_hex(const PipelineConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_hash(config_to_json(config))));
    return buf;
}

void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                        const PipelineConfig& config,
                        const std::vector<std::pair<std::string, std::string>>& artifacts) {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = nlohmann::json::parse(config_to_json(config));
    j["config_hash"] = config_hash_hex(config);
    j["seed"] = config.seed;
    j["version"] = kVersion;
    j["tensor_format_version"] = kTensorVersion;
    nlohmann::json arts = nlohmann::json::object();
    for (const auto& [key, value] : artifacts) arts[key] = value;
    j["artifacts"] = arts;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write run manifest: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace vlg
