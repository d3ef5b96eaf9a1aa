#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vlg/scene.hpp"

namespace vlg {

// Per-point averaged 2D-projected embeddings with validity mask.
struct FusedEmbeddings {
    std::int64_t size = 0;
    int dim = 0;
    std::vector<float> embeddings;        // N x d; rows of invalid points are all-zero
    std::vector<std::uint8_t> valid;      // N; 1 iff the point had >= 1 passing correspondence
    std::vector<std::int32_t> view_counts;  // N

    const float* row(std::int64_t i) const { return embeddings.data() + i * dim; }
};

// Gather the pixel embedding of every passing view per point and average.
// Accumulation runs in double, output is stored in float.
FusedEmbeddings fuse(const PointCloud& cloud, const std::vector<View>& views, double tau,
                     int workers = 1);

struct FuseStats {
    std::int64_t total_points = 0;
    std::int64_t valid_points = 0;
    double coverage = 0;                       // valid / total
    std::map<std::int32_t, std::int64_t> view_count_histogram;
};

FuseStats fuse_stats(const FusedEmbeddings& fused);
std::string fuse_stats_json(const FuseStats& stats);

}  // namespace vlg
