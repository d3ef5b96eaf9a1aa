#pragma once

#include <cstdint>
#include <vector>

namespace vlg {

// k nearest neighbors (self included) for every point of an N x 3 cloud.
// Neighbors are ordered by (squared distance, index) ascending, so both
// implementations return identical lists. k is clamped to N.
struct KnnResult {
    int k = 0;                           // effective k after clamping
    std::vector<std::int32_t> indices;   // N x k
};

KnnResult knn_brute_force(const std::vector<float>& positions, std::int64_t n, int k);
KnnResult knn_grid(const std::vector<float>& positions, std::int64_t n, int k);

}  // namespace vlg
