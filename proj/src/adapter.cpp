#include "vlg/adapter.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vlg/optim.hpp"

namespace vlg {

namespace {

std::vector<double> normalized_bank(const TextEmbeddingBank& bank) {
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

bool row_is_valid(const std::vector<std::uint8_t>& valid, std::int64_t i) {
    return valid.empty() || valid[static_cast<std::size_t>(i)] != 0;
}

// Forward pass of the two-layer MLP for one row. z1 and r must hold h
// entries, out d entries.
void mlp_row(const double* x, const AdapterParams& p, double* z1, double* r, double* out) {
    const int d = p.dim, h = p.hidden;
    for (int j = 0; j < h; ++j) {
        double s = p.b1[static_cast<std::size_t>(j)];
        const double* w = p.w1.data() + static_cast<std::size_t>(j) * d;
        for (int c = 0; c < d; ++c) s += w[c] * x[c];
        z1[j] = s;
        r[j] = s > 0 ? s : 0;
    }
    for (int c = 0; c < d; ++c) {
        double s = p.b2[static_cast<std::size_t>(c)];
        const double* w = p.w2.data() + static_cast<std::size_t>(c) * h;
        for (int j = 0; j < h; ++j) s += w[j] * r[j];
        out[c] = s;
    }
}

struct GradAccum {
    std::vector<double> w1, b1, w2, b2;
    double loss_sum = 0;
    std::int64_t count = 0;

    explicit GradAccum(const AdapterParams& p)
        : w1(p.w1.size(), 0.0), b1(p.b1.size(), 0.0), w2(p.w2.size(), 0.0), b2(p.b2.size(), 0.0) {}
};

// Accumulates unnormalized loss and gradient sums over the labeled points of
// one input block. Used by both adapter_backward and the trainer so batch
// pooling stays a per-point mean.
void backward_accumulate(const std::vector<double>& points, std::int64_t n,
                         const std::vector<std::uint8_t>& valid,
                         const std::vector<std::int32_t>& labels,
                         const std::vector<double>& bank_norm, int num_classes,
                         const AdapterParams& params, double temperature, GradAccum& acc) {
    const int d = params.dim, h = params.hidden, k = num_classes;
    std::vector<double> z1(static_cast<std::size_t>(h)), r(static_cast<std::size_t>(h));
    std::vector<double> z2(static_cast<std::size_t>(d)), a(static_cast<std::size_t>(d));
    std::vector<double> a_hat(static_cast<std::size_t>(d)), logits(static_cast<std::size_t>(k));
    std::vector<double> probs(static_cast<std::size_t>(k)), g_ahat(static_cast<std::size_t>(d));
    std::vector<double> g_z2(static_cast<std::size_t>(d)), g_z1(static_cast<std::size_t>(h));

    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t label = labels[static_cast<std::size_t>(i)];
        if (label == kIgnoreLabel || !row_is_valid(valid, i)) continue;
        const double* x = points.data() + i * d;

        mlp_row(x, params, z1.data(), r.data(), z2.data());
        for (int c = 0; c < d; ++c)
            a[static_cast<std::size_t>(c)] =
                params.alpha * z2[static_cast<std::size_t>(c)] + (1.0 - params.alpha) * x[c];
        double sq = 0;
        for (int c = 0; c < d; ++c) sq += a[static_cast<std::size_t>(c)] * a[static_cast<std::size_t>(c)];
        if (!(sq > 0)) continue;  // zero-norm row cannot be scored
        const double norm_a = std::sqrt(sq);
        for (int c = 0; c < d; ++c) a_hat[static_cast<std::size_t>(c)] = a[static_cast<std::size_t>(c)] / norm_a;

        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
            double s = 0;
            const double* b = bank_norm.data() + static_cast<std::size_t>(j) * d;
            for (int c = 0; c < d; ++c) s += a_hat[static_cast<std::size_t>(c)] * b[c];
            logits[static_cast<std::size_t>(j)] = s / temperature;
            max_logit = std::max(max_logit, logits[static_cast<std::size_t>(j)]);
        }
        double z = 0;
        for (int j = 0; j < k; ++j) {
            probs[static_cast<std::size_t>(j)] = std::exp(logits[static_cast<std::size_t>(j)] - max_logit);
            z += probs[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < k; ++j) probs[static_cast<std::size_t>(j)] /= z;

        acc.loss_sum += -(logits[static_cast<std::size_t>(label)] - max_logit - std::log(z));
        ++acc.count;

        // dL/d(a_hat) through softmax CE; bank rows are constants.
        std::fill(g_ahat.begin(), g_ahat.end(), 0.0);
        for (int j = 0; j < k; ++j) {
            const double gl = (probs[static_cast<std::size_t>(j)] - (j == label ? 1.0 : 0.0)) / temperature;
            const double* b = bank_norm.data() + static_cast<std::size_t>(j) * d;
            for (int c = 0; c < d; ++c) g_ahat[static_cast<std::size_t>(c)] += gl * b[c];
        }
        // Through the normalization: g_a = (g - (g . a_hat) a_hat) / |a|.
        double g_dot = 0;
        for (int c = 0; c < d; ++c) g_dot += g_ahat[static_cast<std::size_t>(c)] * a_hat[static_cast<std::size_t>(c)];
        for (int c = 0; c < d; ++c)
            g_z2[static_cast<std::size_t>(c)] =
                params.alpha * (g_ahat[static_cast<std::size_t>(c)] - g_dot * a_hat[static_cast<std::size_t>(c)]) / norm_a;

        for (int c = 0; c < d; ++c) {
            const double g = g_z2[static_cast<std::size_t>(c)];
            acc.b2[static_cast<std::size_t>(c)] += g;
            double* gw = acc.w2.data() + static_cast<std::size_t>(c) * h;
            for (int j = 0; j < h; ++j) gw[j] += g * r[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < h; ++j) {
            if (z1[static_cast<std::size_t>(j)] <= 0) {
                g_z1[static_cast<std::size_t>(j)] = 0;
                continue;
            }
            double s = 0;
            for (int c = 0; c < d; ++c)
                s += params.w2[static_cast<std::size_t>(c) * h + static_cast<std::size_t>(j)] *
                     g_z2[static_cast<std::size_t>(c)];
            g_z1[static_cast<std::size_t>(j)] = s;
        }
        for (int j = 0; j < h; ++j) {
            const double g = g_z1[static_cast<std::size_t>(j)];
            if (g == 0) continue;
            acc.b1[static_cast<std::size_t>(j)] += g;
            double* gw = acc.w1.data() + static_cast<std::size_t>(j) * d;
            for (int c = 0; c < d; ++c) gw[c] += g * x[c];
        }
    }
}

}  // namespace

AdapterParams init_adapter(int dim, int hidden, double alpha, Rng& rng) {
    if (dim <= 0) throw ConfigError("adapter dim must be positive");
    if (hidden <= 0) hidden = dim;
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("adapter alpha must lie in [0,1]");
    AdapterParams p;
    p.dim = dim;
    p.hidden = hidden;
    p.alpha = alpha;
    p.w1.resize(static_cast<std::size_t>(hidden) * dim);
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2.resize(static_cast<std::size_t>(dim) * hidden);
    p.b2.assign(static_cast<std::size_t>(dim), 0.0);
    const double bound1 = std::sqrt(6.0 / dim);
    for (auto& w : p.w1) w = rng.uniform(-bound1, bound1);
    const double bound2 = std::sqrt(6.0 / hidden);
    for (auto& w : p.w2) w = rng.uniform(-bound2, bound2);
    return p;
}

std::vector<double> adapter_forward(const std::vector<double>& points, std::int64_t n,
                                    const std::vector<std::uint8_t>& valid,
                                    const AdapterParams& params) {
    const int d = params.dim;
    if (static_cast<std::int64_t>(points.size()) != n * d)
        throw ConfigError("adapter_forward: input shape does not match dim");
    std::vector<double> out(points.size(), 0.0);
    std::vector<double> z1(static_cast<std::size_t>(params.hidden));
    std::vector<double> r(static_cast<std::size_t>(params.hidden));
    std::vector<double> z2(static_cast<std::size_t>(d));
    for (std::int64_t i = 0; i < n; ++i) {
        if (!row_is_valid(valid, i)) continue;  // invalid rows stay zero
        const double* x = points.data() + i * d;
        double* y = out.data() + i * d;
        if (params.alpha == 0.0) {
            for (int c = 0; c < d; ++c) y[c] = x[c];
            continue;
        }
        mlp_row(x, params, z1.data(), r.data(), z2.data());
        for (int c = 0; c < d; ++c)
            y[c] = params.alpha * z2[static_cast<std::size_t>(c)] + (1.0 - params.alpha) * x[c];
    }
    return out;
}

SpecializationLoss specialization_loss(const std::vector<double>& adapted, std::int64_t n,
                                       const TextEmbeddingBank& bank,
                                       const std::vector<std::int32_t>& labels,
                                       double temperature) {
    const int d = bank.dim;
    const int k = bank.num_classes();
    if (static_cast<std::int64_t>(adapted.size()) != n * d)
        throw ConfigError("specialization_loss: adapted shape does not match bank dim");
    const std::vector<double> bank_norm = normalized_bank(bank);

    SpecializationLoss out;
    out.logits.assign(static_cast<std::size_t>(n) * k, 0.0);
    double loss_sum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double* a = adapted.data() + i * d;
        double sq = 0;
        for (int c = 0; c < d; ++c) sq += a[c] * a[c];
        if (sq > 0) {
            const double inv = 1.0 / std::sqrt(sq);
            double* row = out.logits.data() + i * k;
            for (int j = 0; j < k; ++j) {
                double s = 0;
                const double* b = bank_norm.data() + static_cast<std::size_t>(j) * d;
                for (int c = 0; c < d; ++c) s += a[c] * inv * b[c];
                row[j] = s;
            }
        }
        const std::int32_t label = labels[static_cast<std::size_t>(i)];
        if (label == kIgnoreLabel || !(sq > 0)) continue;

        const double* row = out.logits.data() + i * k;
        double max_logit = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) max_logit = std::max(max_logit, row[j] / temperature);
        double z = 0;
        for (int j = 0; j < k; ++j) z += std::exp(row[j] / temperature - max_logit);
        loss_sum += -(row[label] / temperature - max_logit - std::log(z));
        ++out.counted;
    }
    if (out.counted == 0) throw NumericError("specialization loss: every point is ignored");
    out.loss = loss_sum / static_cast<double>(out.counted);
    return out;
}

AdapterGradients adapter_backward(const std::vector<double>& points, std::int64_t n,
                                  const std::vector<std::uint8_t>& valid,
                                  const std::vector<std::int32_t>& labels,
                                  const TextEmbeddingBank& bank, const AdapterParams& params,
                                  double temperature) {
    const std::vector<double> bank_norm = normalized_bank(bank);
    GradAccum acc(params);
    backward_accumulate(points, n, valid, labels, bank_norm, bank.num_classes(), params,
                        temperature, acc);
    if (acc.count == 0) throw NumericError("adapter_backward: every point is ignored");
    const double inv = 1.0 / static_cast<double>(acc.count);
    AdapterGradients g;
    g.loss = acc.loss_sum * inv;
    g.w1 = std::move(acc.w1);
    g.b1 = std::move(acc.b1);
    g.w2 = std::move(acc.w2);
    g.b2 = std::move(acc.b2);
    for (auto* v : {&g.w1, &g.b1, &g.w2, &g.b2})
        for (auto& x : *v) x *= inv;
    return g;
}

AdapterTrainResult train_adapter(const std::vector<AdapterScene>& scenes,
                                 const TextEmbeddingBank& bank,
                                 const AdapterTrainConfig& config) {
    // Promote each scene's fused rows to double once.
    struct SceneData {
        std::vector<double> points;
        std::int64_t n = 0;
        const std::vector<std::int32_t>* labels = nullptr;
        const std::vector<std::uint8_t>* valid = nullptr;
    };
    std::vector<SceneData> data;
    std::int64_t labeled_total = 0;
    for (const auto& scene : scenes) {
        if (scene.fused == nullptr || scene.labels == nullptr)
            throw ConfigError("train_adapter: scene is missing fused embeddings or labels");
        SceneData sd;
        sd.n = scene.fused->size;
        sd.points.assign(scene.fused->embeddings.begin(), scene.fused->embeddings.end());
        sd.labels = scene.labels;
        sd.valid = &scene.fused->valid;
        for (std::int64_t i = 0; i < sd.n; ++i)
            if ((*sd.labels)[static_cast<std::size_t>(i)] != kIgnoreLabel &&
                (*sd.valid)[static_cast<std::size_t>(i)])
                ++labeled_total;
        data.push_back(std::move(sd));
    }
    if (data.empty() || labeled_total == 0)
        throw ConfigError("train_adapter: no scene contributes labeled points");

    Rng rng(config.seed);
    const int hidden = config.hidden > 0 ? config.hidden : bank.dim;
    AdapterParams params = init_adapter(bank.dim, hidden, config.alpha, rng);
    const std::vector<double> bank_norm = normalized_bank(bank);

    Adam<double> adam;
    AdapterTrainResult result;
    const int batch = std::max(1, config.batch_scenes);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = step_decay_lr(config.lr, config.decay_factor, config.decay_every, epoch);
        const auto order = rng.permutation(static_cast<std::int64_t>(data.size()));
        double epoch_loss = 0;
        std::int64_t epoch_count = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
            GradAccum acc(params);
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch));
            for (std::size_t s = start; s < stop; ++s) {
                const SceneData& sd = data[static_cast<std::size_t>(order[s])];
                backward_accumulate(sd.points, sd.n, *sd.valid, *sd.labels, bank_norm,
                                    bank.num_classes(), params, config.temperature, acc);
            }
            if (acc.count == 0) continue;
            const double inv = 1.0 / static_cast<double>(acc.count);
            for (auto* v : {&acc.w1, &acc.b1, &acc.w2, &acc.b2})
                for (auto& x : *v) x *= inv;
            const double batch_loss = acc.loss_sum * inv;
            if (!std::isfinite(batch_loss))
                throw NumericError("adapter training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch));
            adam.step({&params.w1, &params.b1, &params.w2, &params.b2},
                      {acc.w1, acc.b1, acc.w2, acc.b2}, lr);
            epoch_loss += acc.loss_sum;
            epoch_count += acc.count;
        }
        result.loss_curve.push_back(epoch_count > 0 ? epoch_loss / static_cast<double>(epoch_count)
                                                    : 0.0);
    }
    result.params = std::move(params);
    return result;
}

void save_adapter(const AdapterParams& params, const std::filesystem::path& dir,
                  const std::string& meta_extra_json) {
    std::filesystem::create_directories(dir);
    auto to_f32 = [](const std::vector<double>& v) {
        std::vector<float> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
        return out;
    };
    write_tensor(dir / "w1.tnsr", Tensor::from_f32({params.hidden, params.dim}, to_f32(params.w1)));
    write_tensor(dir / "b1.tnsr", Tensor::from_f32({params.hidden}, to_f32(params.b1)));
    write_tensor(dir / "w2.tnsr", Tensor::from_f32({params.dim, params.hidden}, to_f32(params.w2)));
    write_tensor(dir / "b2.tnsr", Tensor::from_f32({params.dim}, to_f32(params.b2)));
    nlohmann::json meta = nlohmann::json::parse(meta_extra_json);
    meta["alpha"] = params.alpha;
    meta["hidden"] = params.hidden;
    meta["dim"] = params.dim;
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) throw IoError("cannot write adapter metadata: " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
}

AdapterParams load_adapter(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in)
        throw MissingArtifactError("adapter checkpoint not found at " + dir.string() +
                                   " (produce it with train-adapter)");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad adapter metadata: " + std::string(e.what()));
    }
    AdapterParams p;
    p.alpha = meta.at("alpha").get<double>();
    p.hidden = meta.at("hidden").get<int>();
    p.dim = meta.at("dim").get<int>();
    auto from_f32 = [](const Tensor& t) {
        std::vector<double> out(t.f32.size());
        for (std::size_t i = 0; i < t.f32.size(); ++i) out[i] = t.f32[i];
        return out;
    };
    p.w1 = from_f32(read_tensor(dir / "w1.tnsr"));
    p.b1 = from_f32(read_tensor(dir / "b1.tnsr"));
    p.w2 = from_f32(read_tensor(dir / "w2.tnsr"));
    p.b2 = from_f32(read_tensor(dir / "b2.tnsr"));
    if (static_cast<int>(p.b1.size()) != p.hidden || static_cast<int>(p.b2.size()) != p.dim ||
        p.w1.size() != static_cast<std::size_t>(p.hidden) * static_cast<std::size_t>(p.dim) ||
        p.w2.size() != static_cast<std::size_t>(p.dim) * static_cast<std::size_t>(p.hidden))
        throw ConfigError("adapter checkpoint tensors disagree with metadata");
    return p;
}

}  // namespace vlg
