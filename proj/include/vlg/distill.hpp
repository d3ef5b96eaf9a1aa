#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlg/adapter.hpp"
#include "vlg/encoder.hpp"
#include "vlg/labeling.hpp"

namespace vlg {

// The four training configurations of the component ablation.
enum class TrainMode {
    SoftGuidanceAdapter,  // align F3D to the frozen adapter's output
    SoftGuidanceRaw,      // align F3D to the raw 2D-projected embeddings
    DirectCeFiltered,     // cross-entropy vs scene-mask-filtered pseudo labels
    DirectCeUnfiltered,   // cross-entropy vs unfiltered pseudo labels
};

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct SoftGuidanceResult {
    double loss = 0;
    std::int64_t counted = 0;
    std::int64_t skipped = 0;  // zero-norm rows
};

// Mean over valid points of 1 - cos(f3d row, target row). Invalid points
// contribute nothing; zero-norm rows are skipped and counted.
template <typename S>
SoftGuidanceResult soft_guidance_loss(const std::vector<S>& f3d, const std::vector<S>& targets,
                                      const std::vector<std::uint8_t>& valid, std::int64_t n,
                                      int dim) {
    SoftGuidanceResult out;
    double loss_sum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!valid.empty() && !valid[static_cast<std::size_t>(i)]) continue;
        const S* f = f3d.data() + i * dim;
        const S* a = targets.data() + i * dim;
        double ff = 0, aa = 0, fa = 0;
        for (int c = 0; c < dim; ++c) {
            ff += static_cast<double>(f[c]) * f[c];
            aa += static_cast<double>(a[c]) * a[c];
            fa += static_cast<double>(f[c]) * a[c];
        }
        if (!(ff > 0) || !(aa > 0)) {
            ++out.skipped;
            continue;
        }
        loss_sum += 1.0 - fa / (std::sqrt(ff) * std::sqrt(aa));
        ++out.counted;
    }
    out.loss = out.counted > 0 ? loss_sum / static_cast<double>(out.counted) : 0.0;
    return out;
}

namespace detail {

// Unnormalized sums for the cosine alignment loss: grad receives
// d(sum_i 1-cos)/dF; the caller divides by the pooled count.
template <typename S>
void cosine_alignment_backward(const std::vector<S>& f3d, const std::vector<S>& targets,
                               const std::vector<std::uint8_t>& valid, std::int64_t n, int dim,
                               std::vector<S>& grad, double& loss_sum, std::int64_t& count,
                               std::int64_t& skipped) {
    grad.assign(static_cast<std::size_t>(n) * dim, S(0));
    for (std::int64_t i = 0; i < n; ++i) {
        if (!valid.empty() && !valid[static_cast<std::size_t>(i)]) continue;
        const S* f = f3d.data() + i * dim;
        const S* a = targets.data() + i * dim;
        double ff = 0, aa = 0, fa = 0;
        for (int c = 0; c < dim; ++c) {
            ff += static_cast<double>(f[c]) * f[c];
            aa += static_cast<double>(a[c]) * a[c];
            fa += static_cast<double>(f[c]) * a[c];
        }
        if (!(ff > 0) || !(aa > 0)) {
            ++skipped;
            continue;
        }
        const double nf = std::sqrt(ff), na = std::sqrt(aa);
        const double cosv = fa / (nf * na);
        loss_sum += 1.0 - cosv;
        ++count;
        S* g = grad.data() + i * dim;
        for (int c = 0; c < dim; ++c)
            g[c] = static_cast<S>(-(a[c] / (nf * na) - cosv * f[c] / ff));
    }
}

// Unnormalized sums for softmax cross-entropy of cosine logits vs labels;
// gradient flows to the embedding rows, the bank stays frozen.
template <typename S>
void ce_alignment_backward(const std::vector<S>& f3d, const std::vector<double>& bank_norm,
                           int num_classes, const std::vector<std::int32_t>& labels,
                           std::int64_t n, int dim, double temperature, std::vector<S>& grad,
                           double& loss_sum, std::int64_t& count) {
    grad.assign(static_cast<std::size_t>(n) * dim, S(0));
    std::vector<double> logits(static_cast<std::size_t>(num_classes));
    std::vector<double> probs(static_cast<std::size_t>(num_classes));
    std::vector<double> g_hat(static_cast<std::size_t>(dim));
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t label = labels[static_cast<std::size_t>(i)];
        if (label == kIgnoreLabel) continue;
        const S* f = f3d.data() + i * dim;
        double ff = 0;
        for (int c = 0; c < dim; ++c) ff += static_cast<double>(f[c]) * f[c];
        if (!(ff > 0)) continue;
        const double nf = std::sqrt(ff);

        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < num_classes; ++j) {
            double s = 0;
            const double* b = bank_norm.data() + static_cast<std::int64_t>(j) * dim;
            for (int c = 0; c < dim; ++c) s += f[c] / nf * b[c];
            logits[static_cast<std::size_t>(j)] = s / temperature;
            max_logit = std::max(max_logit, logits[static_cast<std::size_t>(j)]);
        }
        double z = 0;
        for (int j = 0; j < num_classes; ++j) {
            probs[static_cast<std::size_t>(j)] =
                std::exp(logits[static_cast<std::size_t>(j)] - max_logit);
            z += probs[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < num_classes; ++j) probs[static_cast<std::size_t>(j)] /= z;
        loss_sum += -(logits[static_cast<std::size_t>(label)] - max_logit - std::log(z));
        ++count;

        std::fill(g_hat.begin(), g_hat.end(), 0.0);
        for (int j = 0; j < num_classes; ++j) {
            const double gl =
                (probs[static_cast<std::size_t>(j)] - (j == label ? 1.0 : 0.0)) / temperature;
            const double* b = bank_norm.data() + static_cast<std::int64_t>(j) * dim;
            for (int c = 0; c < dim; ++c) g_hat[static_cast<std::size_t>(c)] += gl * b[c];
        }
        double g_dot = 0;
        for (int c = 0; c < dim; ++c) g_dot += g_hat[static_cast<std::size_t>(c)] * f[c] / nf;
        S* g = grad.data() + i * dim;
        for (int c = 0; c < dim; ++c)
            g[c] = static_cast<S>((g_hat[static_cast<std::size_t>(c)] - g_dot * f[c] / nf) / nf);
    }
}

std::vector<double> bank_rows_normalized(const TextEmbeddingBank& bank);

}  // namespace detail

struct DistillScene {
    const PointCloud* cloud = nullptr;
    const FusedEmbeddings* fused = nullptr;
    const std::vector<std::string>* scene_labels = nullptr;
};

struct DistillConfig {
    double lr = 0.0001;
    int batch_scenes = 8;
    double poly_power = 0.9;
    int iters = 1000;
    double temperature = 0.01;
    std::vector<int> pre_widths{32};
    std::vector<int> post_widths{32};
    int k = 16;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct DistillResult {
    PointEncoderParams params;
    std::vector<double> loss_curve;   // pooled loss per step
    std::int64_t skipped_rows = 0;    // zero-norm warnings across training
};

// Train the point encoder under the selected mode. The adapter checkpoint is
// required (and frozen) in SoftGuidanceAdapter mode. Deterministic for a
// given seed and any worker count: per-scene gradients are reduced in scene
// order.
DistillResult train_3d(const std::vector<DistillScene>& scenes, const TextEmbeddingBank& bank,
                       const AdapterParams* adapter, const DistillConfig& config, TrainMode mode);

}  // namespace vlg
