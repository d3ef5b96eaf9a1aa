#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlg/geometry.hpp"
#include "vlg/tensor.hpp"

namespace vlg {

struct PointCloud {
    std::int64_t size = 0;
    std::vector<float> positions;  // N x 3, meters
    std::vector<float> colors;     // N x 3, [0,1]
    std::vector<std::int32_t> gt_labels;  // N, values in [0,K) or kIgnoreLabel; empty if absent
    bool has_gt() const { return !gt_labels.empty(); }

    Vec3 position(std::int64_t i) const {
        const auto* p = positions.data() + 3 * i;
        return {p[0], p[1], p[2]};
    }
};

// One posed view: dense per-pixel embedding map plus optional depth.
struct View {
    CameraPose pose;
    int dim = 0;
    std::vector<float> embeddings;  // H x W x d
    std::vector<float> depth;       // H x W, meters; empty if absent
    bool has_depth() const { return !depth.empty(); }

    const float* pixel_embedding(int py, int px) const {
        return embeddings.data() + (static_cast<std::int64_t>(py) * pose.width + px) * dim;
    }
};

struct Scene {
    PointCloud cloud;
    std::vector<View> views;
    std::vector<std::string> scene_labels;  // classes present, scene-level annotation
    std::vector<std::string> class_names;   // full label set, ordered
    int dim = 0;                            // shared embedding dimension
};

// Manifest JSON schema (paths relative to the manifest file):
//   {
//     "points_file": "points.tnsr",
//     "class_names": [...], "scene_labels": [...],
//     "gt_labels_file": "gt.tnsr",              // optional
//     "views": [{"embedding_file": "...", "intrinsics": [[...3x3...]],
//                "extrinsics": [[...4x4...]], "depth_file": "..."}]  // depth optional
//   }
Scene load_scene(const std::filesystem::path& manifest_path);

}  // namespace vlg
