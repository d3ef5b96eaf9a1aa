#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlg/knn.hpp"
#include "vlg/parallel.hpp"
#include "vlg/rng.hpp"
#include "vlg/scene.hpp"

namespace vlg {

// Reference point encoder: a per-point MLP with one k-NN mean-aggregation
// layer in the middle. The aggregation emits [own features | neighborhood
// mean] so per-point identity survives the smoothing. Inputs are xyz
// normalized to the scene bounding box plus rgb. Stands in for a heavy
// sparse-conv backbone behind the same interface.
struct EncoderConfig {
    std::vector<int> pre_widths{32};   // affine+ReLU stack before aggregation
    std::vector<int> post_widths{32};  // affine+ReLU stack after aggregation
    int out_dim = 16;                  // d, must match the bank
    int k = 16;                        // aggregation neighborhood size
};

inline constexpr int kPointFeatureDim = 6;

struct LayerDims {
    int in = 0;
    int out = 0;
};

// Affine layer shapes in forward order; the aggregation between the pre and
// post stacks doubles the width and carries no parameters.
std::vector<LayerDims> encoder_layer_dims(const EncoderConfig& cfg);
int widths_before_agg(const EncoderConfig& cfg);

template <typename S>
struct EncoderNet {
    EncoderConfig cfg;
    // Layer l maps widths[l] -> widths[l+1]; weights are input-major
    // (in x out) so the inner loops stream over the output width.
    std::vector<std::vector<S>> weights;
    std::vector<std::vector<S>> biases;
};

using PointEncoderParams = EncoderNet<float>;

template <typename S>
EncoderNet<S> init_encoder(const EncoderConfig& cfg, Rng& rng) {
    EncoderNet<S> net;
    net.cfg = cfg;
    for (const LayerDims dims : encoder_layer_dims(cfg)) {
        std::vector<S> w(static_cast<std::size_t>(dims.in) * static_cast<std::size_t>(dims.out));
        const double bound = std::sqrt(6.0 / dims.in);
        for (auto& x : w) x = static_cast<S>(rng.uniform(-bound, bound));
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(static_cast<std::size_t>(dims.out), S(0));
    }
    return net;
}

// N x 6 feature rows: xyz shifted to the bounding-box origin and scaled by
// the largest extent (translation- and scene-scale-invariant), then rgb.
std::vector<float> build_point_features(const PointCloud& cloud);

template <typename S>
struct EncoderActivations {
    // One matrix per activation in forward order: features, pre stack
    // outputs, aggregated features, post stack outputs, final embeddings.
    std::vector<std::vector<S>> acts;
    std::int64_t n = 0;
};

namespace detail {

template <typename S>
void affine_forward(const std::vector<S>& input, std::int64_t n, int in, int out,
                    const std::vector<S>& w, const std::vector<S>& b, bool relu,
                    std::vector<S>& output, int workers) {
    output.assign(static_cast<std::size_t>(n) * out, S(0));
    parallel_for(n, workers, [&](std::int64_t i) {
        const S* x = input.data() + i * in;
        S* y = output.data() + i * out;
        for (int j = 0; j < out; ++j) y[j] = b[static_cast<std::size_t>(j)];
        for (int c = 0; c < in; ++c) {
            const S xc = x[c];
            if (xc == S(0)) continue;
            const S* wr = w.data() + static_cast<std::size_t>(c) * out;
            for (int j = 0; j < out; ++j) y[j] += xc * wr[j];
        }
        if (relu)
            for (int j = 0; j < out; ++j) y[j] = y[j] > S(0) ? y[j] : S(0);
    });
}

}  // namespace detail

// Forward pass over one scene. `neighbors` must come from knn_* on the same
// cloud ordering. Activations are retained only when `save` is non-null.
template <typename S>
std::vector<S> encoder_forward(const EncoderNet<S>& net, const std::vector<S>& features,
                               std::int64_t n, const KnnResult& neighbors,
                               EncoderActivations<S>* save = nullptr, int workers = 1) {
    const std::vector<LayerDims> dims = encoder_layer_dims(net.cfg);
    const std::size_t npre = net.cfg.pre_widths.size();
    EncoderActivations<S> local;
    EncoderActivations<S>& acts = save ? *save : local;
    acts.n = n;
    acts.acts.clear();
    acts.acts.push_back(features);

    std::size_t layer = 0;
    std::vector<S> current = features;
    for (std::size_t l = 0; l < npre; ++l, ++layer) {
        std::vector<S> next;
        detail::affine_forward(current, n, dims[layer].in, dims[layer].out, net.weights[layer],
                               net.biases[layer], true, next, workers);
        current = std::move(next);
        acts.acts.push_back(current);
    }

    // k-NN aggregation: [own activation | neighborhood mean]. Every
    // neighborhood has exactly neighbors.k members (clamped upstream), so
    // the mean uses a fixed divisor.
    {
        const int w = widths_before_agg(net.cfg);
        const int k = neighbors.k;
        std::vector<S> agg(static_cast<std::size_t>(n) * 2 * w, S(0));
        const S inv = S(1) / static_cast<S>(k);
        parallel_for(n, workers, [&](std::int64_t i) {
            S* y = agg.data() + i * 2 * w;
            const S* own = current.data() + i * w;
            for (int c = 0; c < w; ++c) y[c] = own[c];
            const std::int32_t* nb = neighbors.indices.data() + i * k;
            for (int s = 0; s < k; ++s) {
                const S* h = current.data() + static_cast<std::int64_t>(nb[s]) * w;
                for (int c = 0; c < w; ++c) y[w + c] += h[c];
            }
            for (int c = 0; c < w; ++c) y[w + c] *= inv;
        });
        current = std::move(agg);
        acts.acts.push_back(current);
    }

    const std::size_t nlayers = net.weights.size();
    for (; layer < nlayers; ++layer) {
        const bool relu = layer + 1 < nlayers;  // final layer stays linear
        std::vector<S> next;
        detail::affine_forward(current, n, dims[layer].in, dims[layer].out, net.weights[layer],
                               net.biases[layer], relu, next, workers);
        current = std::move(next);
        acts.acts.push_back(current);
    }
    return current;
}

namespace detail {

// dL/d(pre-activation) comes in as g; emits parameter gradients and dL/d(input).
template <typename S>
std::vector<S> affine_backward(const std::vector<S>& input, std::int64_t n, int in, int out,
                               const std::vector<S>& w, const std::vector<S>& g,
                               std::vector<S>& grad_w, std::vector<S>& grad_b) {
    std::vector<S> gin(static_cast<std::size_t>(n) * in, S(0));
    for (std::int64_t i = 0; i < n; ++i) {
        const S* gy = g.data() + i * out;
        const S* xi = input.data() + i * in;
        S* gxi = gin.data() + i * in;
        for (int j = 0; j < out; ++j) grad_b[static_cast<std::size_t>(j)] += gy[j];
        for (int c = 0; c < in; ++c) {
            const S xc = xi[c];
            S* gw = grad_w.data() + static_cast<std::size_t>(c) * out;
            const S* wr = w.data() + static_cast<std::size_t>(c) * out;
            S s = S(0);
            for (int j = 0; j < out; ++j) {
                gw[j] += xc * gy[j];
                s += wr[j] * gy[j];
            }
            gxi[c] = s;
        }
    }
    return gin;
}

// ReLU outputs double as their own pre-activation mask.
template <typename S>
void relu_mask(const std::vector<S>& output, std::vector<S>& g) {
    for (std::size_t i = 0; i < g.size(); ++i)
        if (output[i] <= S(0)) g[i] = S(0);
}

}  // namespace detail

// Backward pass matching encoder_forward. `grad_out` is dL/d(embeddings),
// N x d. Parameter gradients are accumulated into grad_weights/grad_biases
// (initialized to the weight shapes when empty).
template <typename S>
void encoder_backward(const EncoderNet<S>& net, const EncoderActivations<S>& acts,
                      const KnnResult& neighbors, const std::vector<S>& grad_out,
                      std::vector<std::vector<S>>& grad_weights,
                      std::vector<std::vector<S>>& grad_biases) {
    const std::vector<LayerDims> dims = encoder_layer_dims(net.cfg);
    const std::size_t npre = net.cfg.pre_widths.size();
    const std::size_t nlayers = net.weights.size();
    const std::int64_t n = acts.n;

    if (grad_weights.size() != nlayers) {
        grad_weights.assign(nlayers, {});
        grad_biases.assign(nlayers, {});
        for (std::size_t l = 0; l < nlayers; ++l) {
            grad_weights[l].assign(net.weights[l].size(), S(0));
            grad_biases[l].assign(net.biases[l].size(), S(0));
        }
    }

    // Activation layout: acts[0] = features, acts[1..npre] = pre outputs,
    // acts[npre+1] = aggregation output, acts[l+2] = output of post layer l.
    // g always holds dL/d(pre-activation) of the layer being processed.
    std::vector<S> g = grad_out;  // final layer is linear: no mask
    for (std::size_t l = nlayers; l-- > npre;) {
        const std::vector<S>& input = acts.acts[l + 1];
        g = detail::affine_backward(input, n, dims[l].in, dims[l].out, net.weights[l], g,
                                    grad_weights[l], grad_biases[l]);
        if (l > npre) detail::relu_mask(input, g);  // input was a ReLU output
    }

    // Aggregation backward: identity half goes straight back, the mean half
    // scatters to the contributors.
    {
        const int w = widths_before_agg(net.cfg);
        const int k = neighbors.k;
        const S inv = S(1) / static_cast<S>(k);
        std::vector<S> gh(static_cast<std::size_t>(n) * w, S(0));
        for (std::int64_t i = 0; i < n; ++i) {
            const S* gy = g.data() + i * 2 * w;
            S* own = gh.data() + i * w;
            for (int c = 0; c < w; ++c) own[c] += gy[c];
            const std::int32_t* nb = neighbors.indices.data() + i * k;
            for (int s = 0; s < k; ++s) {
                S* dst = gh.data() + static_cast<std::int64_t>(nb[s]) * w;
                for (int c = 0; c < w; ++c) dst[c] += gy[w + c] * inv;
            }
        }
        g = std::move(gh);
        if (npre > 0) detail::relu_mask(acts.acts[npre], g);
    }

    for (std::size_t l = npre; l-- > 0;) {
        const std::vector<S>& input = acts.acts[l];
        g = detail::affine_backward(input, n, dims[l].in, dims[l].out, net.weights[l], g,
                                    grad_weights[l], grad_biases[l]);
        if (l > 0) detail::relu_mask(input, g);
    }
}

// Embeddings for every point of a cloud (fusion validity plays no role here;
// the encoder sees only geometry and color).
std::vector<float> encode_points(const PointCloud& cloud, const PointEncoderParams& net,
                                 int workers = 1);

void save_encoder(const PointEncoderParams& net, const std::filesystem::path& dir,
                  const std::string& meta_extra_json = "{}");
PointEncoderParams load_encoder(const std::filesystem::path& dir);

}  // namespace vlg
