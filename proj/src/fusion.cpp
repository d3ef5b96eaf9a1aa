#include "vlg/fusion.hpp"

#include <cmath>

#include <json.hpp>

#include "vlg/parallel.hpp"

namespace vlg {

FusedEmbeddings fuse(const PointCloud& cloud, const std::vector<View>& views, double tau,
                     int workers) {
    int dim = 0;
    for (const View& view : views) {
        if (dim == 0)
            dim = view.dim;
        else if (view.dim != dim)
            throw ConfigError("fuse: views disagree on embedding dimension");
    }

    FusedEmbeddings out;
    out.size = cloud.size;
    out.dim = dim;
    out.embeddings.assign(static_cast<std::size_t>(cloud.size) * dim, 0.0f);
    out.valid.assign(static_cast<std::size_t>(cloud.size), 0);
    out.view_counts.assign(static_cast<std::size_t>(cloud.size), 0);

    parallel_for(cloud.size, workers, [&](std::int64_t i) {
        std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
        std::int32_t count = 0;
        for (const View& view : views) {
            const Projection proj = project_point(cloud.position(i), view.pose);
            if (!proj.visible) continue;
            const float* depth = view.has_depth() ? view.depth.data() : nullptr;
            if (!occlusion_check(proj, depth, view.pose.height, view.pose.width, tau)) continue;
            const int px = static_cast<int>(std::lround(proj.u));
            const int py = static_cast<int>(std::lround(proj.v));
            const float* emb = view.pixel_embedding(py, px);
            for (int c = 0; c < dim; ++c) acc[static_cast<std::size_t>(c)] += emb[c];
            ++count;
        }
        out.view_counts[static_cast<std::size_t>(i)] = count;
        if (count > 0) {
            out.valid[static_cast<std::size_t>(i)] = 1;
            float* row = out.embeddings.data() + i * dim;
            for (int c = 0; c < dim; ++c)
                row[c] = static_cast<float>(acc[static_cast<std::size_t>(c)] / count);
        }
    });
    return out;
}

FuseStats fuse_stats(const FusedEmbeddings& fused) {
    FuseStats stats;
    stats.total_points = fused.size;
    for (std::int64_t i = 0; i < fused.size; ++i) {
        if (fused.valid[static_cast<std::size_t>(i)]) ++stats.valid_points;
        ++stats.view_count_histogram[fused.view_counts[static_cast<std::size_t>(i)]];
    }
    stats.coverage =
        fused.size > 0 ? static_cast<double>(stats.valid_points) / static_cast<double>(fused.size)
                       : 0.0;
    return stats;
}

std::string fuse_stats_json(const FuseStats& stats) {
    nlohmann::json j;
    j["total_points"] = stats.total_points;
    j["valid_points"] = stats.valid_points;
    j["coverage"] = stats.coverage;
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& [count, points] : stats.view_count_histogram)
        hist[std::to_string(count)] = points;
    j["view_count_histogram"] = hist;
    return j.dump(2);
}

}  // namespace vlg
