#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/labeling.hpp"
#include "vlg/rng.hpp"

namespace vlg {

// Two-layer residual adapter: out = alpha * MLP(x) + (1 - alpha) * x with
// MLP(x) = W2 * relu(W1 * x + b1) + b2. All math runs in double.
struct AdapterParams {
    int dim = 0;     // d, input and output width
    int hidden = 0;  // h
    double alpha = 0.5;
    std::vector<double> w1;  // h x d row-major
    std::vector<double> b1;  // h
    std::vector<double> w2;  // d x h row-major
    std::vector<double> b2;  // d
};

AdapterParams init_adapter(int dim, int hidden, double alpha, Rng& rng);

// Row-wise residual blend; rows with valid=0 pass through as zeros.
// `points` is N x d row-major. An empty valid mask means all rows are valid.
std::vector<double> adapter_forward(const std::vector<double>& points, std::int64_t n,
                                    const std::vector<std::uint8_t>& valid,
                                    const AdapterParams& params);

struct SpecializationLoss {
    double loss = 0;
    std::int64_t counted = 0;            // points entering the mean
    std::vector<double> logits;          // N x K cosine logits of adapted rows vs bank
};

// Cross-entropy of softmax(logits / temperature) against pseudo labels,
// averaged over non-ignored valid points. Throws NumericError when no point
// carries a label.
SpecializationLoss specialization_loss(const std::vector<double>& adapted, std::int64_t n,
                                       const TextEmbeddingBank& bank,
                                       const std::vector<std::int32_t>& labels,
                                       double temperature);

struct AdapterGradients {
    double loss = 0;
    std::vector<double> w1, b1, w2, b2;
};

// Analytic gradients of the specialization loss w.r.t. all adapter
// parameters; the bank stays frozen.
AdapterGradients adapter_backward(const std::vector<double>& points, std::int64_t n,
                                  const std::vector<std::uint8_t>& valid,
                                  const std::vector<std::int32_t>& labels,
                                  const TextEmbeddingBank& bank, const AdapterParams& params,
                                  double temperature);

struct AdapterTrainConfig {
    double alpha = 0.5;
    int hidden = 0;  // 0 selects h = d
    double lr = 0.003;
    int batch_scenes = 16;
    double decay_factor = 0.7;
    int decay_every = 20;
    int epochs = 80;
    double temperature = 0.01;
    std::uint64_t seed = 1;
};

// One training scene: fused embeddings plus their pseudo labels.
struct AdapterScene {
    const FusedEmbeddings* fused = nullptr;
    const std::vector<std::int32_t>* labels = nullptr;
};

struct AdapterTrainResult {
    AdapterParams params;
    std::vector<double> loss_curve;  // mean loss per epoch
};

// Adam over scene-level batches with step decay. Deterministic per seed.
AdapterTrainResult train_adapter(const std::vector<AdapterScene>& scenes,
                                 const TextEmbeddingBank& bank,
                                 const AdapterTrainConfig& config);

void save_adapter(const AdapterParams& params, const std::filesystem::path& dir,
                  const std::string& meta_extra_json = "{}");
AdapterParams load_adapter(const std::filesystem::path& dir);

}  // namespace vlg
