// vlgseg: command-line front end for the weakly supervised 3D segmentation
// pipeline. One subcommand per stage; a shared JSON config with flat
// override flags; exit codes 0 ok, 2 config error, 3 missing artifact,
// 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "vlg/config.hpp"
#include "vlg/evalkit.hpp"
#include "vlg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

struct CommonArgs {
    std::string config_path;
    vlg::PipelineConfig config;
};

// Shared flags; every flag mirrors one config field and overrides the file.
void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "pipeline config JSON");
    cmd->add_option("--paths.scene_list", args.config.paths.scene_list, "suite manifest path");
    cmd->add_option("--paths.bank", args.config.paths.bank,
                    "bank tensor path (sidecar <stem>.json)");
    cmd->add_option("--paths.out_dir", args.config.paths.out_dir, "output directory");
    cmd->add_option("--geometry.tau", args.config.geometry.tau, "occlusion tolerance in meters");
    cmd->add_option("--labeling.temperature", args.config.labeling.temperature,
                    "softmax temperature");
    cmd->add_option("--adapter.alpha", args.config.adapter.alpha, "residual ratio");
    cmd->add_option("--adapter.hidden", args.config.adapter.hidden, "hidden width (0 = d)");
    cmd->add_option("--adapter.lr", args.config.adapter.lr, "adapter learning rate");
    cmd->add_option("--adapter.batch", args.config.adapter.batch, "adapter batch (scenes)");
    cmd->add_option("--adapter.decay", args.config.adapter.decay, "lr decay factor");
    cmd->add_option("--adapter.decay_every", args.config.adapter.decay_every,
                    "epochs between decays");
    cmd->add_option("--adapter.epochs", args.config.adapter.epochs, "adapter epochs");
    cmd->add_option("--distill.mode", args.config.distill.mode,
                    "soft_guidance_adapter | soft_guidance_raw | direct_ce_filtered | "
                    "direct_ce_unfiltered");
    cmd->add_option("--distill.lr", args.config.distill.lr, "encoder learning rate");
    cmd->add_option("--distill.batch", args.config.distill.batch, "encoder batch (scenes)");
    cmd->add_option("--distill.poly_power", args.config.distill.poly_power, "poly lr exponent");
    cmd->add_option("--distill.iters", args.config.distill.iters, "optimizer steps");
    cmd->add_option("--distill.k", args.config.distill.k, "aggregation neighborhood size");
    cmd->add_option("--seed", args.config.seed, "global seed");
    cmd->add_option("--workers", args.config.workers, "scene-level parallelism");
}

json artifact_footer(const std::string& command,
                     const std::vector<std::pair<std::string, std::string>>& artifacts) {
    json j;
    j["command"] = command;
    json arts = json::object();
    for (const auto& [key, value] : artifacts) arts[key] = fs::absolute(value).string();
    j["artifacts"] = arts;
    return j;
}

vlg::EvalSuite load_suite_checked(const vlg::PipelineConfig& config) {
    if (config.paths.scene_list.empty())
        throw vlg::ConfigError("paths.scene_list is not set (synth-gen writes one)");
    return vlg::load_suite(config.paths.scene_list);
}

// Per-scene fused artifacts written by `fuse`, reloaded by later stages.
vlg::FusedEmbeddings load_fused(const fs::path& dir, std::size_t index) {
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%03zu", index);
    const fs::path base = dir / name;
    if (!fs::exists(base.string() + ".p2d.tnsr"))
        throw vlg::MissingArtifactError("fused embeddings for scene " + std::to_string(index) +
                                        " not found under " + dir.string() +
                                        " (run `vlgseg fuse` first)");
    vlg::Tensor p2d = vlg::read_tensor(base.string() + ".p2d.tnsr");
    vlg::Tensor valid = vlg::read_tensor(base.string() + ".valid.tnsr");
    vlg::Tensor counts = vlg::read_tensor(base.string() + ".counts.tnsr");
    vlg::FusedEmbeddings fused;
    fused.size = p2d.shape[0];
    fused.dim = static_cast<int>(p2d.shape[1]);
    fused.embeddings = std::move(p2d.f32);
    fused.valid.assign(fused.size, 0);
    for (std::int64_t i = 0; i < fused.size; ++i)
        fused.valid[static_cast<std::size_t>(i)] = valid.i32[static_cast<std::size_t>(i)] != 0;
    fused.view_counts = std::move(counts.i32);
    return fused;
}

void save_fused(const vlg::FusedEmbeddings& fused, const fs::path& dir, std::size_t index) {
    fs::create_directories(dir);
    char name[64];
    std::snprintf(name, sizeof(name), "scene_%03zu", index);
    const fs::path base = dir / name;
    vlg::write_tensor(base.string() + ".p2d.tnsr",
                      vlg::Tensor::from_f32({fused.size, fused.dim}, fused.embeddings));
    std::vector<std::int32_t> valid(fused.valid.begin(), fused.valid.end());
    vlg::write_tensor(base.string() + ".valid.tnsr",
                      vlg::Tensor::from_i32({fused.size}, std::move(valid)));
    vlg::write_tensor(base.string() + ".counts.tnsr",
                      vlg::Tensor::from_i32({fused.size}, fused.view_counts));
}

int cmd_synth_gen(const CommonArgs& args, const std::string& spec_path) {
    vlg::SynthSpec spec;
    if (!spec_path.empty()) spec = vlg::load_synth_spec(spec_path);
    spec.seed = args.config.seed;
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "synth";
    const fs::path suite = vlg::generate(spec, out_dir);
    vlg::write_run_manifest(out_dir / "run.json", "synth-gen", args.config,
                            {{"suite", "suite.json"}});
    std::cout << artifact_footer("synth-gen", {{"suite", suite.string()},
                                               {"bank", (out_dir / "bank.tnsr").string()}})
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_fuse(const CommonArgs& args) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "fused";
    json coverage = json::array();
    for (std::size_t s = 0; s < suite.train.size(); ++s) {
        const vlg::Scene& scene = suite.train[s];
        const vlg::FusedEmbeddings fused =
            vlg::fuse(scene.cloud, scene.views, args.config.geometry.tau, args.config.workers);
        save_fused(fused, out_dir, s);
        coverage.push_back(json::parse(vlg::fuse_stats_json(vlg::fuse_stats(fused))));
    }
    {
        std::ofstream out(out_dir / "coverage.json", std::ios::trunc);
        out << coverage.dump(2) << "\n";
    }
    vlg::write_run_manifest(out_dir / "run.json", "fuse", args.config,
                            {{"fused_dir", "."}, {"coverage", "coverage.json"}});
    std::cout << artifact_footer("fuse", {{"fused_dir", out_dir.string()},
                                          {"coverage", (out_dir / "coverage.json").string()}})
                     .dump()
              << "\n";
    return kExitOk;
}

int cmd_pseudo(const CommonArgs& args) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const fs::path fused_dir = fs::path(args.config.paths.out_dir) / "fused";
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "pseudo";
    fs::create_directories(out_dir);
    for (std::size_t s = 0; s < suite.train.size(); ++s) {
        const vlg::FusedEmbeddings fused = load_fused(fused_dir, s);
        const vlg::SceneMask mask =
            vlg::make_scene_mask(suite.train[s].scene_labels, suite.bank.class_names);
        const vlg::PseudoLabels labels = vlg::pseudo_labels(
            vlg::apply_scene_mask(vlg::class_logits(fused, suite.bank),
                                  suite.bank.num_classes(), mask),
            fused.valid, suite.bank.num_classes());
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%03zu.labels.tnsr", s);
        vlg::write_tensor(out_dir / name,
                          vlg::Tensor::from_i32({fused.size}, labels.labels));
    }
    vlg::write_run_manifest(out_dir / "run.json", "pseudo", args.config,
                            {{"labels_dir", "."}});
    std::cout << artifact_footer("pseudo", {{"labels_dir", out_dir.string()}}).dump() << "\n";
    return kExitOk;
}

int cmd_train_adapter(const CommonArgs& args) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const fs::path fused_dir = fs::path(args.config.paths.out_dir) / "fused";
    const fs::path labels_dir = fs::path(args.config.paths.out_dir) / "pseudo";
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "adapter";

    std::vector<vlg::FusedEmbeddings> fused;
    std::vector<std::vector<std::int32_t>> labels;
    for (std::size_t s = 0; s < suite.train.size(); ++s) {
        fused.push_back(load_fused(fused_dir, s));
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%03zu.labels.tnsr", s);
        if (!fs::exists(labels_dir / name))
            throw vlg::MissingArtifactError("pseudo labels for scene " + std::to_string(s) +
                                            " not found (run `vlgseg pseudo` first)");
        labels.push_back(vlg::read_tensor(labels_dir / name).i32);
    }
    std::vector<vlg::AdapterScene> scenes(fused.size());
    for (std::size_t s = 0; s < fused.size(); ++s) scenes[s] = {&fused[s], &labels[s]};

    const auto result = vlg::train_adapter(scenes, suite.bank, args.config.adapter_train_config());
    json meta;
    meta["seed"] = args.config.seed;
    meta["config_hash"] = vlg::config_hash_hex(args.config);
    meta["final_loss"] = result.loss_curve.back();
    vlg::save_adapter(result.params, out_dir, meta.dump());
    {
        std::ofstream out(out_dir / "loss_curve.json", std::ios::trunc);
        out << json(result.loss_curve).dump() << "\n";
    }
    vlg::write_run_manifest(out_dir / "run.json", "train-adapter", args.config,
                            {{"checkpoint", "."}, {"loss_curve", "loss_curve.json"}});
    std::cout << artifact_footer("train-adapter", {{"checkpoint", out_dir.string()}}).dump()
              << "\n";
    return kExitOk;
}

int cmd_train_3d(const CommonArgs& args) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const fs::path fused_dir = fs::path(args.config.paths.out_dir) / "fused";
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "encoder";
    const vlg::TrainMode mode = vlg::parse_train_mode(args.config.distill.mode);

    std::vector<vlg::FusedEmbeddings> fused;
    for (std::size_t s = 0; s < suite.train.size(); ++s) fused.push_back(load_fused(fused_dir, s));
    std::vector<vlg::DistillScene> scenes(fused.size());
    for (std::size_t s = 0; s < fused.size(); ++s)
        scenes[s] = {&suite.train[s].cloud, &fused[s], &suite.train[s].scene_labels};

    vlg::AdapterParams adapter;
    const vlg::AdapterParams* adapter_ptr = nullptr;
    if (mode == vlg::TrainMode::SoftGuidanceAdapter) {
        adapter = vlg::load_adapter(fs::path(args.config.paths.out_dir) / "adapter");
        adapter_ptr = &adapter;
    }

    const auto result =
        vlg::train_3d(scenes, suite.bank, adapter_ptr, args.config.distill_config(), mode);
    json meta;
    meta["mode"] = args.config.distill.mode;
    meta["seed"] = args.config.seed;
    meta["config_hash"] = vlg::config_hash_hex(args.config);
    meta["final_loss"] = result.loss_curve.back();
    meta["skipped_rows"] = result.skipped_rows;
    vlg::save_encoder(result.params, out_dir, meta.dump());
    {
        std::ofstream out(out_dir / "loss_curve.json", std::ios::trunc);
        out << json(result.loss_curve).dump() << "\n";
    }
    vlg::write_run_manifest(out_dir / "run.json", "train-3d", args.config,
                            {{"checkpoint", "."}, {"loss_curve", "loss_curve.json"}});
    std::cout << artifact_footer("train-3d", {{"checkpoint", out_dir.string()}}).dump() << "\n";
    return kExitOk;
}

int cmd_infer(const CommonArgs& args, bool test_split) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const auto& scenes = test_split ? suite.test : suite.train;
    const vlg::PointEncoderParams net =
        vlg::load_encoder(fs::path(args.config.paths.out_dir) / "encoder");
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "pred";
    fs::create_directories(out_dir);
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const vlg::SegmentationResult seg =
            vlg::infer(scenes[s].cloud, net, suite.bank, args.config.workers);
        char name[64];
        std::snprintf(name, sizeof(name), "scene_%03zu.labels.tnsr", s);
        vlg::write_tensor(out_dir / name, vlg::Tensor::from_i32(
                                              {scenes[s].cloud.size}, seg.labels));
    }
    vlg::write_run_manifest(out_dir / "run.json", "infer", args.config, {{"pred_dir", "."}});
    std::cout << artifact_footer("infer", {{"pred_dir", out_dir.string()}}).dump() << "\n";
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& foreign_bank) {
    const vlg::EvalSuite suite = load_suite_checked(args.config);
    const vlg::PointEncoderParams net =
        vlg::load_encoder(fs::path(args.config.paths.out_dir) / "encoder");

    vlg::TextEmbeddingBank bank = suite.bank;
    if (!foreign_bank.empty()) {
        fs::path names = fs::path(foreign_bank);
        names.replace_extension(".json");
        bank = vlg::load_bank(foreign_bank, names);
    }
    const vlg::MetricsReport report =
        vlg::evaluate_encoder(net, suite.test, bank, args.config.workers);
    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "eval";
    fs::create_directories(out_dir);
    {
        std::ofstream out(out_dir / "report.json", std::ios::trunc);
        out << vlg::metrics_json(report, bank.class_names) << "\n";
    }
    vlg::write_run_manifest(out_dir / "run.json", "eval", args.config,
                            {{"report", "report.json"}});
    std::printf("mIoU %.4f  mAcc %.4f  (%lld points)\n", report.miou, report.macc,
                static_cast<long long>(report.scored_points));
    std::cout << artifact_footer("eval", {{"report", (out_dir / "report.json").string()}}).dump()
              << "\n";
    return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& spec_path,
               std::vector<std::uint64_t> seeds) {
    if (seeds.empty()) seeds = {args.config.seed};
    vlg::SynthSpec spec;
    if (!spec_path.empty()) spec = vlg::load_synth_spec(spec_path);

    vlg::AblationConfig cfg;
    cfg.seeds = seeds;
    cfg.adapter = args.config.adapter_train_config();
    cfg.distill = args.config.distill_config();
    cfg.tau = args.config.geometry.tau;

    const bool use_synth = args.config.paths.scene_list.empty();
    vlg::AblationReport report = vlg::run_ablation(
        [&](std::uint64_t seed) {
            vlg::EvalSuite suite;
            if (use_synth) {
                vlg::SynthSpec seeded = spec;
                seeded.seed = seed;
                vlg::SynthSuite synth = vlg::generate_suite(seeded);
                for (auto& s : synth.train) suite.train.push_back(std::move(s.scene));
                for (auto& s : synth.test) suite.test.push_back(std::move(s.scene));
                suite.bank = std::move(synth.bank);
            } else {
                suite = vlg::load_suite(args.config.paths.scene_list);
            }
            return suite;
        },
        cfg);

    const fs::path out_dir = fs::path(args.config.paths.out_dir) / "ablation";
    fs::create_directories(out_dir);
    for (std::size_t s = 0; s < report.seeds.size(); ++s) {
        for (std::size_t m = 0; m < report.modes.size(); ++m) {
            const vlg::AblationCell& cell = report.rows[s][m];
            char leaf[96];
            std::snprintf(leaf, sizeof(leaf), "seed_%llu/%s",
                          static_cast<unsigned long long>(report.seeds[s]),
                          vlg::train_mode_name(report.modes[m]));
            vlg::save_encoder(cell.encoder, out_dir / leaf / "encoder",
                              json{{"mode", vlg::train_mode_name(report.modes[m])},
                                   {"seed", report.seeds[s]}}
                                  .dump());
            if (cell.has_adapter)
                vlg::save_adapter(cell.adapter, out_dir / leaf / "adapter",
                                  json{{"seed", report.seeds[s]}}.dump());
        }
    }
    {
        std::ofstream out(out_dir / "table.md", std::ios::trunc);
        out << vlg::ablation_markdown(report);
    }
    {
        std::ofstream out(out_dir / "table.json", std::ios::trunc);
        out << vlg::ablation_json(report) << "\n";
    }
    vlg::write_run_manifest(out_dir / "run.json", "ablate", args.config,
                            {{"table_md", "table.md"}, {"table_json", "table.json"}});
    std::cout << vlg::ablation_markdown(report);
    std::cout << artifact_footer("ablate", {{"table_md", (out_dir / "table.md").string()},
                                            {"table_json", (out_dir / "table.json").string()}})
                     .dump()
              << "\n";
    return kExitOk;
}

// Finite-difference sweeps over the adapter and encoder. Exits nonzero when
// any parameter misses the 1e-4 relative-error bound.
int cmd_gradcheck(const CommonArgs& args) {
    (void)args;
    vlg::Rng rng(1234);
    double worst = 0;
    std::int64_t params_checked = 0;

    const auto update = [&](double analytic, double fd) {
        const double rel =
            std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
        worst = std::max(worst, rel);
        ++params_checked;
    };

    // adapter sweeps
    for (const int d : {4, 8, 16}) {
        for (const int h : {8, 32}) {
            vlg::AdapterParams p = vlg::init_adapter(d, h, 0.6, rng);
            vlg::TextEmbeddingBank bank;
            bank.dim = d;
            for (int j = 0; j < 5; ++j) {
                bank.class_names.push_back("c" + std::to_string(j));
                for (int c = 0; c < d; ++c)
                    bank.embeddings.push_back(static_cast<float>(rng.normal()));
            }
            const std::int64_t n = 6;
            std::vector<double> x(static_cast<std::size_t>(n) * d);
            for (auto& v : x) v = rng.normal();
            std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
            for (auto& l : labels) l = rng.uniform_int(0, 4);
            const double temperature = 0.05;
            const auto analytic = vlg::adapter_backward(x, n, {}, labels, bank, p, temperature);

            const double step = 1e-4;
            auto sweep = [&](std::vector<double>& param, const std::vector<double>& grad) {
                for (std::size_t i = 0; i < param.size(); ++i) {
                    const double orig = param[i];
                    param[i] = orig + step;
                    const double lp = vlg::specialization_loss(vlg::adapter_forward(x, n, {}, p),
                                                               n, bank, labels, temperature)
                                          .loss;
                    param[i] = orig - step;
                    const double lm = vlg::specialization_loss(vlg::adapter_forward(x, n, {}, p),
                                                               n, bank, labels, temperature)
                                          .loss;
                    param[i] = orig;
                    update(grad[i], (lp - lm) / (2 * step));
                }
            };
            sweep(p.w1, analytic.w1);
            sweep(p.b1, analytic.b1);
            sweep(p.w2, analytic.w2);
            sweep(p.b2, analytic.b2);
        }
    }

    // encoder sweep: 8 points, d = 4, both loss modes
    {
        const std::int64_t n = 8;
        const int d = 4;
        vlg::EncoderConfig cfg;
        cfg.pre_widths = {6};
        cfg.post_widths = {5};
        cfg.out_dim = d;
        cfg.k = 3;
        vlg::EncoderNet<double> net = vlg::init_encoder<double>(cfg, rng);
        std::vector<double> features(static_cast<std::size_t>(n) * vlg::kPointFeatureDim);
        for (auto& v : features) v = rng.uniform(0, 1);
        std::vector<float> positions(static_cast<std::size_t>(3 * n));
        for (auto& v : positions) v = static_cast<float>(rng.uniform(-1, 1));
        const vlg::KnnResult neighbors = vlg::knn_brute_force(positions, n, cfg.k);
        std::vector<double> targets(static_cast<std::size_t>(n) * d);
        for (auto& v : targets) v = rng.normal();
        std::vector<std::uint8_t> valid(static_cast<std::size_t>(n), 1);
        vlg::TextEmbeddingBank bank;
        bank.dim = d;
        for (int j = 0; j < 3; ++j) {
            bank.class_names.push_back("c" + std::to_string(j));
            for (int c = 0; c < d; ++c) bank.embeddings.push_back(static_cast<float>(rng.normal()));
        }
        const auto bank_norm = vlg::detail::bank_rows_normalized(bank);
        std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
        for (auto& l : labels) l = rng.uniform_int(0, 2);

        for (const bool cosine_mode : {true, false}) {
            auto loss_of = [&]() {
                const auto f3d = vlg::encoder_forward<double>(net, features, n, neighbors);
                if (cosine_mode)
                    return vlg::soft_guidance_loss<double>(f3d, targets, valid, n, d).loss;
                std::vector<double> grad;
                double loss_sum = 0;
                std::int64_t count = 0;
                vlg::detail::ce_alignment_backward<double>(f3d, bank_norm, 3, labels, n, d, 0.1,
                                                           grad, loss_sum, count);
                return loss_sum / static_cast<double>(count);
            };
            vlg::EncoderActivations<double> acts;
            const auto f3d = vlg::encoder_forward<double>(net, features, n, neighbors, &acts);
            std::vector<double> grad_f;
            double loss_sum = 0;
            std::int64_t count = 0, skipped = 0;
            if (cosine_mode)
                vlg::detail::cosine_alignment_backward<double>(f3d, targets, valid, n, d, grad_f,
                                                               loss_sum, count, skipped);
            else
                vlg::detail::ce_alignment_backward<double>(f3d, bank_norm, 3, labels, n, d, 0.1,
                                                           grad_f, loss_sum, count);
            for (auto& g : grad_f) g /= static_cast<double>(count);
            std::vector<std::vector<double>> gw, gb;
            vlg::encoder_backward<double>(net, acts, neighbors, grad_f, gw, gb);

            const double step = 1e-4;
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                for (auto [param, grad] :
                     {std::pair{&net.weights[l], &gw[l]}, std::pair{&net.biases[l], &gb[l]}}) {
                    for (std::size_t i = 0; i < param->size(); ++i) {
                        const double orig = (*param)[i];
                        (*param)[i] = orig + step;
                        const double lp = loss_of();
                        (*param)[i] = orig - step;
                        const double lm = loss_of();
                        (*param)[i] = orig;
                        update((*grad)[i], (lp - lm) / (2 * step));
                    }
                }
            }
        }
    }

    std::printf("gradcheck: %lld parameters, worst relative error %.3e\n",
                static_cast<long long>(params_checked), worst);
    if (worst >= 1e-4) {
        std::fprintf(stderr, "gradcheck FAILED (bound 1e-4)\n");
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"weakly supervised 3D semantic segmentation pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string spec_path;
    std::string seeds_csv;
    std::string foreign_bank;
    bool infer_train_split = false;

    auto* synth_gen = app.add_subcommand("synth-gen", "generate a synthetic scene suite");
    synth_gen->add_option("--spec", spec_path, "synth spec JSON (defaults when omitted)");
    auto* fuse = app.add_subcommand("fuse", "back-project and average 2D embeddings per point");
    auto* pseudo = app.add_subcommand("pseudo", "scene-mask-filtered pseudo labels");
    auto* train_adapter = app.add_subcommand("train-adapter", "embeddings specialization stage");
    auto* train_3d = app.add_subcommand("train-3d", "embeddings soft-guidance stage");
    auto* infer = app.add_subcommand("infer", "per-point open-vocabulary segmentation");
    infer->add_flag("--train-split", infer_train_split, "run on the training split instead");
    auto* eval = app.add_subcommand("eval", "metrics against ground truth");
    eval->add_option("--cross-bank", foreign_bank, "evaluate against a different bank tensor");
    auto* ablate = app.add_subcommand("ablate", "run the four-mode component ablation");
    ablate->add_option("--spec", spec_path, "synth spec JSON for per-seed suites");
    ablate->add_option("--seeds", seeds_csv, "comma-separated seeds, e.g. 1,2,3");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");

    for (auto* cmd : {synth_gen, fuse, pseudo, train_adapter, train_3d, infer, eval, ablate,
                      gradcheck})
        add_common_options(cmd, args);

    // Two passes: the first finds --config, then flags are re-applied on top
    // of the file's values.
    try {
        app.parse(argc, argv);
        if (!args.config_path.empty()) {
            args.config = vlg::load_config(args.config_path);
            app.clear();
            app.parse(argc, argv);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    } catch (const vlg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }

    try {
        if (synth_gen->parsed()) return cmd_synth_gen(args, spec_path);
        if (fuse->parsed()) return cmd_fuse(args);
        if (pseudo->parsed()) return cmd_pseudo(args);
        if (train_adapter->parsed()) return cmd_train_adapter(args);
        if (train_3d->parsed()) return cmd_train_3d(args);
        if (infer->parsed()) return cmd_infer(args, !infer_train_split);
        if (eval->parsed()) return cmd_eval(args, foreign_bank);
        if (ablate->parsed()) {
            std::vector<std::uint64_t> seeds;
            std::size_t pos = 0;
            while (pos < seeds_csv.size()) {
                const std::size_t comma = seeds_csv.find(',', pos);
                const std::string tok = seeds_csv.substr(
                    pos, comma == std::string::npos ? std::string::npos : comma - pos);
                if (!tok.empty()) {
                    try {
                        seeds.push_back(std::stoull(tok));
                    } catch (const std::exception&) {
                        throw vlg::ConfigError("bad --seeds entry: " + tok);
                    }
                }
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            return cmd_ablate(args, spec_path, seeds);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(args);
    } catch (const vlg::MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return kExitMissing;
    } catch (const vlg::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const vlg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const vlg::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitMissing;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
