#include "vlg/evalkit.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "vlg/fusion.hpp"

namespace vlg {

SegmentationResult infer(const PointCloud& cloud, const PointEncoderParams& net,
                         const TextEmbeddingBank& bank, int workers) {
    if (net.cfg.out_dim != bank.dim)
        throw ConfigError("encoder output dimension does not match bank dimension");
    const std::vector<float> f3d = encode_points(cloud, net, workers);
    const std::vector<double> bank_norm = detail::bank_rows_normalized(bank);
    const int k = bank.num_classes();
    const int d = bank.dim;

    SegmentationResult out;
    out.logits.assign(static_cast<std::size_t>(cloud.size) * k, 0.0f);
    out.labels.resize(static_cast<std::size_t>(cloud.size));
    for (std::int64_t i = 0; i < cloud.size; ++i) {
        const float* f = f3d.data() + i * d;
        double sq = 0;
        for (int c = 0; c < d; ++c) sq += static_cast<double>(f[c]) * f[c];
        const double inv = sq > 0 ? 1.0 / std::sqrt(sq) : 0.0;
        float* row = out.logits.data() + i * k;
        for (int j = 0; j < k; ++j) {
            double s = 0;
            const double* b = bank_norm.data() + static_cast<std::int64_t>(j) * d;
            for (int c = 0; c < d; ++c) s += f[c] * inv * b[c];
            row[j] = static_cast<float>(s);
        }
        out.labels[static_cast<std::size_t>(i)] = argmax_row(row, k);
    }
    return out;
}

MetricsReport metrics_from_confusion(const std::vector<std::int64_t>& confusion,
                                     int num_classes) {
    MetricsReport report;
    report.num_classes = num_classes;
    report.confusion = confusion;
    report.iou.assign(static_cast<std::size_t>(num_classes),
                      std::numeric_limits<double>::quiet_NaN());
    report.scored.assign(static_cast<std::size_t>(num_classes), 0);

    std::int64_t total = 0;
    for (std::int64_t v : confusion) total += v;
    report.scored_points = total;
    if (total == 0) throw NumericError("metrics: no scored points (all ground truth ignored)");

    double iou_sum = 0;
    int iou_classes = 0;
    double acc_sum = 0;
    int acc_classes = 0;
    for (int k = 0; k < num_classes; ++k) {
        std::int64_t tp = confusion[static_cast<std::size_t>(k * num_classes + k)];
        std::int64_t fn = 0, fp = 0;
        for (int j = 0; j < num_classes; ++j) {
            if (j == k) continue;
            fn += confusion[static_cast<std::size_t>(k * num_classes + j)];
            fp += confusion[static_cast<std::size_t>(j * num_classes + k)];
        }
        if (tp + fp + fn > 0) {
            report.scored[static_cast<std::size_t>(k)] = 1;
            report.iou[static_cast<std::size_t>(k)] =
                static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            iou_sum += report.iou[static_cast<std::size_t>(k)];
            ++iou_classes;
        }
        if (tp + fn > 0) {  // class present in ground truth
            acc_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
            ++acc_classes;
        }
    }
    report.miou = iou_classes > 0 ? iou_sum / iou_classes : 0.0;
    report.macc = acc_classes > 0 ? acc_sum / acc_classes : 0.0;
    return report;
}

MetricsReport compute_metrics(const std::vector<std::int32_t>& pred,
                              const std::vector<std::int32_t>& gt, int num_classes) {
    if (pred.size() != gt.size()) throw ConfigError("metrics: pred/gt length mismatch");
    std::vector<std::int64_t> confusion(
        static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::int32_t g = gt[i];
        if (g == kIgnoreLabel) continue;
        const std::int32_t p = pred[i];
        if (g < 0 || g >= num_classes) throw ConfigError("metrics: gt label out of range");
        if (p < 0 || p >= num_classes) throw ConfigError("metrics: pred label out of range");
        ++confusion[static_cast<std::size_t>(g * num_classes + p)];
    }
    return metrics_from_confusion(confusion, num_classes);
}

std::string metrics_json(const MetricsReport& report,
                         const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["miou"] = report.miou;
    j["macc"] = report.macc;
    j["scored_points"] = report.scored_points;
    j["miou_excludes_absent_classes"] = true;
    nlohmann::json per_class = nlohmann::json::object();
    for (int k = 0; k < report.num_classes; ++k) {
        const std::string name = k < static_cast<int>(class_names.size())
                                     ? class_names[static_cast<std::size_t>(k)]
                                     : "class_" + std::to_string(k);
        if (report.scored[static_cast<std::size_t>(k)])
            per_class[name] = report.iou[static_cast<std::size_t>(k)];
        else
            per_class[name] = nullptr;
    }
    j["iou"] = per_class;
    j["confusion"] = report.confusion;
    return j.dump(2);
}

MetricsReport evaluate_encoder(const PointEncoderParams& encoder,
                               const std::vector<Scene>& scenes,
                               const TextEmbeddingBank& bank, int workers) {
    const int k = bank.num_classes();
    std::vector<std::int64_t> confusion(static_cast<std::size_t>(k) * k, 0);
    for (const Scene& scene : scenes) {
        if (!scene.cloud.has_gt())
            throw ConfigError("evaluation scene has no ground-truth labels");
        const SegmentationResult seg = infer(scene.cloud, encoder, bank, workers);
        for (std::int64_t i = 0; i < scene.cloud.size; ++i) {
            const std::int32_t g = scene.cloud.gt_labels[static_cast<std::size_t>(i)];
            if (g == kIgnoreLabel) continue;
            if (g < 0 || g >= k) throw ConfigError("gt label out of range for this bank");
            ++confusion[static_cast<std::size_t>(g * k + seg.labels[static_cast<std::size_t>(i)])];
        }
    }
    return metrics_from_confusion(confusion, k);
}

MetricsReport cross_domain_eval(const PointEncoderParams& encoder,
                                const std::vector<Scene>& scenes_b,
                                const TextEmbeddingBank& bank_b, int workers) {
    return evaluate_encoder(encoder, scenes_b, bank_b, workers);
}

AblationReport run_ablation(const std::function<EvalSuite(std::uint64_t)>& suite_provider,
                            const AblationConfig& config) {
    AblationReport report;
    report.seeds = config.seeds;
    report.modes = config.modes;

    for (const std::uint64_t seed : config.seeds) {
        const EvalSuite suite = suite_provider(seed);

        // Stage artifacts shared by every mode of this seed.
        std::vector<FusedEmbeddings> fused;
        fused.reserve(suite.train.size());
        for (const Scene& scene : suite.train)
            fused.push_back(fuse(scene.cloud, scene.views, config.tau, config.distill.workers));

        std::vector<AblationCell> row;
        for (const TrainMode mode : config.modes) {
            AdapterParams adapter;
            const AdapterParams* adapter_ptr = nullptr;
            if (mode == TrainMode::SoftGuidanceAdapter) {
                std::vector<PseudoLabels> labels(suite.train.size());
                std::vector<AdapterScene> ascenes(suite.train.size());
                for (std::size_t s = 0; s < suite.train.size(); ++s) {
                    const SceneMask mask =
                        make_scene_mask(suite.train[s].scene_labels, suite.bank.class_names);
                    labels[s] = pseudo_labels(
                        apply_scene_mask(class_logits(fused[s], suite.bank),
                                         suite.bank.num_classes(), mask),
                        fused[s].valid, suite.bank.num_classes());
                    ascenes[s] = {&fused[s], &labels[s].labels};
                }
                AdapterTrainConfig acfg = config.adapter;
                acfg.seed = seed;
                adapter = train_adapter(ascenes, suite.bank, acfg).params;
                adapter_ptr = &adapter;
            }

            std::vector<DistillScene> dscenes(suite.train.size());
            for (std::size_t s = 0; s < suite.train.size(); ++s)
                dscenes[s] = {&suite.train[s].cloud, &fused[s], &suite.train[s].scene_labels};
            DistillConfig dcfg = config.distill;
            dcfg.seed = seed;
            DistillResult trained = train_3d(dscenes, suite.bank, adapter_ptr, dcfg, mode);

            const MetricsReport metrics = evaluate_encoder(
                trained.params, suite.test, suite.bank, config.distill.workers);
            AblationCell cell;
            cell.miou = metrics.miou;
            cell.macc = metrics.macc;
            cell.encoder = std::move(trained.params);
            if (adapter_ptr != nullptr) {
                cell.adapter = adapter;
                cell.has_adapter = true;
            }
            row.push_back(std::move(cell));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string ablation_markdown(const AblationReport& report) {
    std::ostringstream out;
    out << "| seed |";
    for (const TrainMode mode : report.modes) out << " " << train_mode_name(mode) << " |";
    out << "\n|---:|";
    for (std::size_t m = 0; m < report.modes.size(); ++m) out << "---:|";
    out << "\n";
    for (std::size_t s = 0; s < report.seeds.size(); ++s) {
        out << "| " << report.seeds[s] << " |";
        char buf[32];
        for (const AblationCell& cell : report.rows[s]) {
            std::snprintf(buf, sizeof(buf), " %.4f |", cell.miou);
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

std::string ablation_json(const AblationReport& report) {
    nlohmann::json j;
    j["seeds"] = report.seeds;
    nlohmann::json modes = nlohmann::json::array();
    for (const TrainMode mode : report.modes) modes.push_back(train_mode_name(mode));
    j["modes"] = modes;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t s = 0; s < report.rows.size(); ++s) {
        nlohmann::json row = nlohmann::json::object();
        row["seed"] = report.seeds[s];
        for (std::size_t m = 0; m < report.modes.size(); ++m) {
            row[train_mode_name(report.modes[m])] = {{"miou", report.rows[s][m].miou},
                                                     {"macc", report.rows[s][m].macc}};
        }
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j.dump(2);
}

}  // namespace vlg
