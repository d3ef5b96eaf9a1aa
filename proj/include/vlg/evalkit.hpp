#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vlg/distill.hpp"
#include "vlg/encoder.hpp"
#include "vlg/labeling.hpp"

namespace vlg {

struct SegmentationResult {
    std::vector<std::int32_t> labels;  // N, argmax with ties to the lowest index
    std::vector<float> logits;         // N x K cosine logits
};

// Open-vocabulary inference: cosine of normalized F3D rows against the bank,
// no scene mask. Works with any bank sharing the encoder's output dimension.
SegmentationResult infer(const PointCloud& cloud, const PointEncoderParams& net,
                         const TextEmbeddingBank& bank, int workers = 1);

struct MetricsReport {
    int num_classes = 0;
    std::vector<std::int64_t> confusion;  // K x K, row = gt, col = pred
    std::vector<double> iou;              // K; classes outside gt/pred carry NaN
    std::vector<std::uint8_t> scored;     // 1 iff TP+FP+FN > 0 for the class
    double miou = 0;                      // mean IoU over scored classes
    double macc = 0;                      // mean recall over classes present in gt
    std::int64_t scored_points = 0;       // points with gt != kIgnoreLabel
};

// Confusion-matrix metrics; gt entries equal to kIgnoreLabel are excluded.
// Throws NumericError when nothing is scoreable.
MetricsReport compute_metrics(const std::vector<std::int32_t>& pred,
                              const std::vector<std::int32_t>& gt, int num_classes);

MetricsReport metrics_from_confusion(const std::vector<std::int64_t>& confusion,
                                     int num_classes);

std::string metrics_json(const MetricsReport& report,
                         const std::vector<std::string>& class_names);

// One evaluation suite: training scenes, held-out scenes with ground truth,
// and the text bank. Providers regenerate a suite per seed.
struct EvalSuite {
    std::vector<Scene> train;
    std::vector<Scene> test;
    TextEmbeddingBank bank;
};

struct AblationConfig {
    std::vector<std::uint64_t> seeds{1};
    AdapterTrainConfig adapter;
    DistillConfig distill;
    double tau = 0.05;
    std::vector<TrainMode> modes{TrainMode::DirectCeUnfiltered, TrainMode::SoftGuidanceRaw,
                                 TrainMode::DirectCeFiltered, TrainMode::SoftGuidanceAdapter};
};

struct AblationCell {
    double miou = 0;
    double macc = 0;
    PointEncoderParams encoder;           // trained checkpoint for this cell
    AdapterParams adapter;                // populated in the adapter mode only
    bool has_adapter = false;
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    std::vector<TrainMode> modes;
    // rows[seed index][mode index]
    std::vector<std::vector<AblationCell>> rows;
};

// Runs every configured mode for every seed on the provider's suite with
// shared per-seed seeds, mirroring the four-row component ablation.
AblationReport run_ablation(const std::function<EvalSuite(std::uint64_t)>& suite_provider,
                            const AblationConfig& config);

std::string ablation_markdown(const AblationReport& report);
std::string ablation_json(const AblationReport& report);

// Train-on-A, evaluate-on-B: inference against domain B's bank and ground
// truth. Banks may differ in size and naming; only d must match.
MetricsReport cross_domain_eval(const PointEncoderParams& encoder,
                                const std::vector<Scene>& scenes_b,
                                const TextEmbeddingBank& bank_b, int workers = 1);

// Pooled evaluation of a trained encoder over scenes with ground truth.
MetricsReport evaluate_encoder(const PointEncoderParams& encoder,
                               const std::vector<Scene>& scenes,
                               const TextEmbeddingBank& bank, int workers = 1);

}  // namespace vlg
