#include "vlg/scene.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace vlg {

namespace {

nlohmann::json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open: " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
    }
}

Mat3 parse_mat3(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("intrinsics must be a 3x3 array");
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != 3) throw ConfigError("intrinsics must be a 3x3 array");
        for (int c = 0; c < 3; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Mat4 parse_mat4(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("extrinsics must be a 4x4 array");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.size() != 4) throw ConfigError("extrinsics must be a 4x4 array");
        for (int c = 0; c < 4; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace

Scene load_scene(const std::filesystem::path& manifest_path) {
    const nlohmann::json manifest = load_json(manifest_path);
    const std::filesystem::path base = manifest_path.parent_path();

    Scene scene;
    scene.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    scene.scene_labels = manifest.at("scene_labels").get<std::vector<std::string>>();
    for (const auto& label : scene.scene_labels) {
        if (std::find(scene.class_names.begin(), scene.class_names.end(), label) ==
            scene.class_names.end())
            throw ConfigError("scene label '" + label + "' is not in class_names");
    }

    const Tensor points = read_tensor(base / manifest.at("points_file").get<std::string>());
    if (points.dtype != Dtype::F32 || points.shape.size() != 2 || points.shape[1] != 6)
        throw ConfigError("points tensor must be an N x 6 f32 tensor");
    const std::int64_t n = points.shape[0];
    scene.cloud.size = n;
    scene.cloud.positions.resize(static_cast<std::size_t>(3 * n));
    scene.cloud.colors.resize(static_cast<std::size_t>(3 * n));
    for (std::int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
            scene.cloud.positions[static_cast<std::size_t>(3 * i + c)] =
                points.f32[static_cast<std::size_t>(6 * i + c)];
            const float col = points.f32[static_cast<std::size_t>(6 * i + 3 + c)];
            if (col < 0.0f || col > 1.0f) throw ConfigError("point colors must lie in [0,1]");
            scene.cloud.colors[static_cast<std::size_t>(3 * i + c)] = col;
        }
    }

    if (manifest.contains("gt_labels_file") && !manifest["gt_labels_file"].is_null()) {
        const Tensor gt = read_tensor(base / manifest["gt_labels_file"].get<std::string>());
        if (gt.dtype != Dtype::I32 || gt.shape.size() != 1 || gt.shape[0] != n)
            throw ConfigError("gt labels must be an N-length i32 tensor");
        const auto k = static_cast<std::int32_t>(scene.class_names.size());
        for (std::int32_t label : gt.i32) {
            if (label != kIgnoreLabel && (label < 0 || label >= k))
                throw ConfigError("gt label out of range [0,K)");
        }
        scene.cloud.gt_labels = gt.i32;
    }

    for (const auto& view_json : manifest.at("views")) {
        View view;
        view.pose.intrinsics = parse_mat3(view_json.at("intrinsics"));
        view.pose.world_to_camera = parse_mat4(view_json.at("extrinsics"));

        const Tensor emb = read_tensor(base / view_json.at("embedding_file").get<std::string>());
        if (emb.dtype != Dtype::F32 || emb.shape.size() != 3)
            throw ConfigError("view embedding must be an H x W x d f32 tensor");
        view.pose.height = static_cast<int>(emb.shape[0]);
        view.pose.width = static_cast<int>(emb.shape[1]);
        view.dim = static_cast<int>(emb.shape[2]);
        view.embeddings = std::move(emb.f32);

        if (view_json.contains("depth_file") && !view_json["depth_file"].is_null()) {
            const Tensor depth = read_tensor(base / view_json["depth_file"].get<std::string>());
            if (depth.dtype != Dtype::F32 || depth.shape.size() != 2 ||
                depth.shape[0] != view.pose.height || depth.shape[1] != view.pose.width)
                throw ConfigError("depth map must be an H x W f32 tensor matching the view");
            view.depth = std::move(depth.f32);
        }

        view.pose.validate();
        if (scene.views.empty()) {
            scene.dim = view.dim;
        } else if (view.dim != scene.dim) {
            throw ConfigError("views disagree on embedding dimension d");
        }
        scene.views.push_back(std::move(view));
    }

    return scene;
}

}  // namespace vlg
