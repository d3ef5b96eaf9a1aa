#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/adapter.hpp"
#include "vlg/distill.hpp"

namespace vlg {

// Shared configuration for all pipeline stages. Training defaults follow the
// published schedule: adapter lr 0.003, batch 16, x0.7 decay every 20 of 80
// epochs; encoder lr 0.0001, batch 8, poly policy.
struct PipelineConfig {
    struct Paths {
        std::string scene_list;  // suite manifest (see synth-gen)
        std::string bank;        // bank tensor path; sidecar is <stem>.json
        std::string out_dir = "out";
    } paths;

    struct Geometry {
        double tau = 0.05;  // occlusion tolerance, meters; inf disables
    } geometry;

    struct Labeling {
        double temperature = 0.01;  // softmax temperature on cosine logits
    } labeling;

    struct Adapter {
        double alpha = 0.5;
        int hidden = 0;  // 0 selects h = d
        double lr = 0.003;
        int batch = 16;
        double decay = 0.7;
        int decay_every = 20;
        int epochs = 80;
    } adapter;

    struct Distill {
        std::string mode = "soft_guidance_adapter";
        double lr = 0.0001;
        int batch = 8;
        double poly_power = 0.9;
        int iters = 1000;
        int k = 16;
        std::vector<int> pre_widths{32};
        std::vector<int> post_widths{32};
    } distill;

    std::uint64_t seed = 1;
    int workers = 1;

    AdapterTrainConfig adapter_train_config() const;
    DistillConfig distill_config() const;
};

PipelineConfig config_from_json(const std::string& json_text);
std::string config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

// FNV-1a over the canonical JSON dump; stamped into run manifests.
std::uint64_t fnv1a_hash(const std::string& text);
std::string config_hash_hex(const PipelineConfig& config);

// Run manifest: config hash, seed, version and the stage's artifact paths
// (relative to the manifest) — everything needed to reproduce the outputs,
// and nothing clock-dependent.
void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                        const PipelineConfig& config,
                        const std::vector<std::pair<std::string, std::string>>& artifacts);

}  // namespace vlg
