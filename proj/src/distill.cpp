#include "vlg/distill.hpp"

#include <thread>

#include "vlg/optim.hpp"

namespace vlg {

const char* train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::SoftGuidanceAdapter: return "soft_guidance_adapter";
        case TrainMode::SoftGuidanceRaw: return "soft_guidance_raw";
        case TrainMode::DirectCeFiltered: return "direct_ce_filtered";
        case TrainMode::DirectCeUnfiltered: return "direct_ce_unfiltered";
    }
    return "?";
}

TrainMode parse_train_mode(const std::string& name) {
    if (name == "soft_guidance_adapter") return TrainMode::SoftGuidanceAdapter;
    if (name == "soft_guidance_raw") return TrainMode::SoftGuidanceRaw;
    if (name == "direct_ce_filtered") return TrainMode::DirectCeFiltered;
    if (name == "direct_ce_unfiltered") return TrainMode::DirectCeUnfiltered;
    throw ConfigError("unknown training mode: " + name);
}

namespace detail {

std::vector<double> bank_rows_normalized(const TextEmbeddingBank& bank) {
    std::vector<double> out(static_cast<std::size_t>(bank.num_classes()) * bank.dim);
    for (int k = 0; k < bank.num_classes(); ++k) {
        const float* src = bank.row(k);
        double sq = 0;
        for (int c = 0; c < bank.dim; ++c) sq += static_cast<double>(src[c]) * src[c];
        const double inv = sq > 0 ? 1.0 / std::sqrt(sq) : 0.0;
        for (int c = 0; c < bank.dim; ++c)
            out[static_cast<std::size_t>(k) * bank.dim + static_cast<std::size_t>(c)] =
                src[c] * inv;
    }
    return out;
}

}  // namespace detail

namespace {

using S = float;  // training scalar; gradcheck instantiates double directly

struct PreparedScene {
    std::int64_t n = 0;
    std::vector<S> features;
    KnnResult neighbors;
    std::vector<S> targets;                // soft modes
    std::vector<std::uint8_t> valid;       // soft modes
    std::vector<std::int32_t> labels;      // CE modes
};

struct ScenePartial {
    std::vector<std::vector<S>> grad_w, grad_b;
    double loss_sum = 0;
    std::int64_t count = 0;
    std::int64_t skipped = 0;
};

}  // namespace

DistillResult train_3d(const std::vector<DistillScene>& scenes, const TextEmbeddingBank& bank,
                       const AdapterParams* adapter, const DistillConfig& config,
                       TrainMode mode) {
    if (scenes.empty()) throw ConfigError("train_3d: no scenes");
    const bool soft = mode == TrainMode::SoftGuidanceAdapter || mode == TrainMode::SoftGuidanceRaw;
    if (mode == TrainMode::SoftGuidanceAdapter) {
        if (adapter == nullptr)
            throw MissingArtifactError(
                "train-3d in soft_guidance_adapter mode needs an adapter checkpoint; run "
                "train-adapter first");
        if (adapter->dim != bank.dim)
            throw ConfigError("adapter dimension does not match bank dimension");
    }

    EncoderConfig ecfg;
    ecfg.pre_widths = config.pre_widths;
    ecfg.post_widths = config.post_widths;
    ecfg.out_dim = bank.dim;
    ecfg.k = config.k;

    const std::vector<double> bank_norm = detail::bank_rows_normalized(bank);

    std::vector<PreparedScene> prepared(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const DistillScene& scene = scenes[s];
        if (scene.cloud == nullptr || scene.fused == nullptr)
            throw ConfigError("train_3d: scene is missing its cloud or fused embeddings");
        PreparedScene& ps = prepared[s];
        ps.n = scene.cloud->size;
        ps.features = build_point_features(*scene.cloud);
        ps.neighbors = knn_grid(scene.cloud->positions, ps.n, ecfg.k);

        if (soft) {
            ps.valid = scene.fused->valid;
            if (mode == TrainMode::SoftGuidanceRaw) {
                ps.targets = scene.fused->embeddings;
            } else {
                std::vector<double> p2d(scene.fused->embeddings.begin(),
                                        scene.fused->embeddings.end());
                const std::vector<double> adapted =
                    adapter_forward(p2d, ps.n, scene.fused->valid, *adapter);
                ps.targets.resize(adapted.size());
                for (std::size_t i = 0; i < adapted.size(); ++i)
                    ps.targets[i] = static_cast<S>(adapted[i]);
            }
        } else {
            std::vector<float> logits = class_logits(*scene.fused, bank);
            if (mode == TrainMode::DirectCeFiltered) {
                if (scene.scene_labels == nullptr)
                    throw ConfigError("direct_ce_filtered needs scene-level labels");
                const SceneMask mask = make_scene_mask(*scene.scene_labels, bank.class_names);
                logits = apply_scene_mask(std::move(logits), bank.num_classes(), mask);
            }
            ps.labels =
                pseudo_labels(std::move(logits), scene.fused->valid, bank.num_classes()).labels;
        }
    }

    Rng rng(config.seed);
    EncoderNet<S> net = init_encoder<S>(ecfg, rng);

    Adam<S> adam;
    DistillResult result;
    const int batch = std::max(1, std::min<int>(config.batch_scenes,
                                                static_cast<int>(prepared.size())));
    std::vector<std::int64_t> order;
    std::size_t cursor = 0;

    std::vector<std::vector<S>*> param_ptrs;
    for (auto& w : net.weights) param_ptrs.push_back(&w);
    for (auto& b : net.biases) param_ptrs.push_back(&b);

    for (int iter = 0; iter < config.iters; ++iter) {
        // Scene-level batching with epoch reshuffles.
        std::vector<std::int64_t> batch_ids;
        while (static_cast<int>(batch_ids.size()) < batch) {
            if (cursor >= order.size()) {
                order = rng.permutation(static_cast<std::int64_t>(prepared.size()));
                cursor = 0;
            }
            batch_ids.push_back(order[cursor++]);
        }

        std::vector<ScenePartial> partials(batch_ids.size());
        const auto run_scene = [&](std::size_t b) {
            const PreparedScene& ps = prepared[static_cast<std::size_t>(batch_ids[b])];
            ScenePartial& out = partials[b];
            EncoderActivations<S> acts;
            const std::vector<S> f3d =
                encoder_forward<S>(net, ps.features, ps.n, ps.neighbors, &acts);
            std::vector<S> grad_f;
            if (soft) {
                detail::cosine_alignment_backward<S>(f3d, ps.targets, ps.valid, ps.n,
                                                     ecfg.out_dim, grad_f, out.loss_sum,
                                                     out.count, out.skipped);
            } else {
                detail::ce_alignment_backward<S>(f3d, bank_norm, bank.num_classes(), ps.labels,
                                                 ps.n, ecfg.out_dim, config.temperature, grad_f,
                                                 out.loss_sum, out.count);
            }
            encoder_backward<S>(net, acts, ps.neighbors, grad_f, out.grad_w, out.grad_b);
        };

        if (config.workers > 1 && batch_ids.size() > 1) {
            std::vector<std::thread> pool;
            const std::size_t stride =
                std::max<std::size_t>(1, (batch_ids.size() + config.workers - 1) /
                                             static_cast<std::size_t>(config.workers));
            for (std::size_t lo = 0; lo < batch_ids.size(); lo += stride) {
                const std::size_t hi = std::min(batch_ids.size(), lo + stride);
                pool.emplace_back([&, lo, hi] {
                    for (std::size_t b = lo; b < hi; ++b) run_scene(b);
                });
            }
            for (auto& th : pool) th.join();
        } else {
            for (std::size_t b = 0; b < batch_ids.size(); ++b) run_scene(b);
        }

        // Fixed-order reduction keeps results independent of worker count.
        std::vector<std::vector<S>> grad_w, grad_b;
        double loss_sum = 0;
        std::int64_t count = 0;
        for (std::size_t b = 0; b < partials.size(); ++b) {
            ScenePartial& p = partials[b];
            loss_sum += p.loss_sum;
            count += p.count;
            result.skipped_rows += p.skipped;
            if (p.grad_w.empty()) continue;
            if (grad_w.empty()) {
                grad_w = std::move(p.grad_w);
                grad_b = std::move(p.grad_b);
            } else {
                for (std::size_t l = 0; l < grad_w.size(); ++l) {
                    for (std::size_t i = 0; i < grad_w[l].size(); ++i)
                        grad_w[l][i] += p.grad_w[l][i];
                    for (std::size_t i = 0; i < grad_b[l].size(); ++i)
                        grad_b[l][i] += p.grad_b[l][i];
                }
            }
        }
        if (count == 0)
            throw NumericError("train_3d: batch carries no scoreable point");
        const double loss = loss_sum / static_cast<double>(count);
        if (!std::isfinite(loss))
            throw NumericError("train_3d diverged: non-finite loss at iter " +
                               std::to_string(iter));
        result.loss_curve.push_back(loss);

        const S scale = static_cast<S>(1.0 / static_cast<double>(count));
        std::vector<std::vector<S>> grads;
        grads.reserve(grad_w.size() + grad_b.size());
        for (auto& g : grad_w) {
            for (auto& x : g) x *= scale;
            grads.push_back(std::move(g));
        }
        for (auto& g : grad_b) {
            for (auto& x : g) x *= scale;
            grads.push_back(std::move(g));
        }
        const double lr = poly_lr(config.lr, iter, config.iters, config.poly_power);
        adam.step(param_ptrs, grads, lr);
    }

    result.params = std::move(net);
    return result;
}

}  // namespace vlg
