#include "vlg/encoder.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace vlg {

int widths_before_agg(const EncoderConfig& cfg) {
    return cfg.pre_widths.empty() ? kPointFeatureDim : cfg.pre_widths.back();
}

std::vector<LayerDims> encoder_layer_dims(const EncoderConfig& cfg) {
    for (int w : cfg.pre_widths)
        if (w <= 0) throw ConfigError("encoder widths must be positive");
    for (int w : cfg.post_widths)
        if (w <= 0) throw ConfigError("encoder widths must be positive");
    if (cfg.out_dim <= 0) throw ConfigError("encoder output dimension must be positive");
    if (cfg.k <= 0) throw ConfigError("encoder k must be positive");

    std::vector<LayerDims> dims;
    int width = kPointFeatureDim;
    for (int w : cfg.pre_widths) {
        dims.push_back({width, w});
        width = w;
    }
    width *= 2;  // [own | neighborhood mean]
    for (int w : cfg.post_widths) {
        dims.push_back({width, w});
        width = w;
    }
    dims.push_back({width, cfg.out_dim});
    return dims;
}

std::vector<float> build_point_features(const PointCloud& cloud) {
    if (cloud.size < 1) throw ConfigError("encoder: empty point cloud");
    float lo[3], hi[3];
    for (int c = 0; c < 3; ++c) {
        lo[c] = std::numeric_limits<float>::infinity();
        hi[c] = -std::numeric_limits<float>::infinity();
    }
    for (std::int64_t i = 0; i < cloud.size; ++i)
        for (int c = 0; c < 3; ++c) {
            const float v = cloud.positions[static_cast<std::size_t>(3 * i + c)];
            lo[c] = std::min(lo[c], v);
            hi[c] = std::max(hi[c], v);
        }
    const float extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    const float scale = extent > 0 ? 1.0f / extent : 1.0f;

    std::vector<float> features(static_cast<std::size_t>(cloud.size) * kPointFeatureDim);
    for (std::int64_t i = 0; i < cloud.size; ++i) {
        float* f = features.data() + i * kPointFeatureDim;
        for (int c = 0; c < 3; ++c)
            f[c] = (cloud.positions[static_cast<std::size_t>(3 * i + c)] - lo[c]) * scale;
        for (int c = 0; c < 3; ++c) f[3 + c] = cloud.colors[static_cast<std::size_t>(3 * i + c)];
    }
    return features;
}

std::vector<float> encode_points(const PointCloud& cloud, const PointEncoderParams& net,
                                 int workers) {
    const std::vector<float> features = build_point_features(cloud);
    const KnnResult neighbors = knn_grid(cloud.positions, cloud.size, net.cfg.k);
    return encoder_forward<float>(net, features, cloud.size, neighbors, nullptr, workers);
}

void save_encoder(const PointEncoderParams& net, const std::filesystem::path& dir,
                  const std::string& meta_extra_json) {
    std::filesystem::create_directories(dir);
    const std::vector<LayerDims> dims = encoder_layer_dims(net.cfg);
    nlohmann::json meta = nlohmann::json::parse(meta_extra_json);
    meta["pre_widths"] = net.cfg.pre_widths;
    meta["post_widths"] = net.cfg.post_widths;
    meta["out_dim"] = net.cfg.out_dim;
    meta["k"] = net.cfg.k;
    meta["layers"] = net.weights.size();
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    if (!out) throw IoError("cannot write encoder metadata: " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";

    char name[32];
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        std::snprintf(name, sizeof(name), "layer%02zu.w.tnsr", l);
        write_tensor(dir / name, Tensor::from_f32({dims[l].in, dims[l].out}, net.weights[l]));
        std::snprintf(name, sizeof(name), "layer%02zu.b.tnsr", l);
        write_tensor(dir / name, Tensor::from_f32({dims[l].out}, net.biases[l]));
    }
}

PointEncoderParams load_encoder(const std::filesystem::path& dir) {
    const auto meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in)
        throw MissingArtifactError("encoder checkpoint not found at " + dir.string() +
                                   " (produce it with train-3d)");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad encoder metadata: " + std::string(e.what()));
    }
    PointEncoderParams net;
    net.cfg.pre_widths = meta.at("pre_widths").get<std::vector<int>>();
    net.cfg.post_widths = meta.at("post_widths").get<std::vector<int>>();
    net.cfg.out_dim = meta.at("out_dim").get<int>();
    net.cfg.k = meta.at("k").get<int>();
    const std::vector<LayerDims> dims = encoder_layer_dims(net.cfg);

    char name[32];
    for (std::size_t l = 0; l < dims.size(); ++l) {
        std::snprintf(name, sizeof(name), "layer%02zu.w.tnsr", l);
        Tensor w = read_tensor(dir / name);
        std::snprintf(name, sizeof(name), "layer%02zu.b.tnsr", l);
        Tensor b = read_tensor(dir / name);
        if (w.shape != std::vector<std::int64_t>{dims[l].in, dims[l].out} ||
            b.shape != std::vector<std::int64_t>{dims[l].out})
            throw ConfigError("encoder checkpoint tensors disagree with metadata");
        net.weights.push_back(std::move(w.f32));
        net.biases.push_back(std::move(b.f32));
    }
    return net;
}

}  // namespace vlg
