#include "vlg/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "vlg/common.hpp"

namespace vlg {

namespace {

using Candidate = std::pair<double, std::int32_t>;  // (squared distance, index)

double sq_dist(const float* a, const float* b) {
    const double dx = static_cast<double>(a[0]) - b[0];
    const double dy = static_cast<double>(a[1]) - b[1];
    const double dz = static_cast<double>(a[2]) - b[2];
    return dx * dx + dy * dy + dz * dz;
}

// Bounded best-k set as a max-heap over (distance, index).
struct BestK {
    explicit BestK(int k) : k(static_cast<std::size_t>(k)) { heap.reserve(this->k + 1); }

    void offer(Candidate c) {
        if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    bool full() const { return heap.size() == k; }
    double worst() const { return full() ? heap.front().first : std::numeric_limits<double>::infinity(); }

    std::vector<Candidate> sorted() {
        std::sort(heap.begin(), heap.end());
        return heap;
    }

    std::size_t k;
    std::vector<Candidate> heap;
};

}  // namespace

KnnResult knn_brute_force(const std::vector<float>& positions, std::int64_t n, int k) {
    if (n <= 0) throw ConfigError("knn: empty cloud");
    const int keff = static_cast<int>(std::min<std::int64_t>(k, n));
    KnnResult out;
    out.k = keff;
    out.indices.resize(static_cast<std::size_t>(n) * keff);
    std::vector<Candidate> all(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const float* pi = positions.data() + 3 * i;
        for (std::int64_t j = 0; j < n; ++j)
            all[static_cast<std::size_t>(j)] = {sq_dist(pi, positions.data() + 3 * j),
                                                static_cast<std::int32_t>(j)};
        std::partial_sort(all.begin(), all.begin() + keff, all.end());
        for (int s = 0; s < keff; ++s)
            out.indices[static_cast<std::size_t>(i) * keff + static_cast<std::size_t>(s)] =
                all[static_cast<std::size_t>(s)].second;
    }
    return out;
}

KnnResult knn_grid(const std::vector<float>& positions, std::int64_t n, int k) {
    if (n <= 0) throw ConfigError("knn: empty cloud");
    const int keff = static_cast<int>(std::min<std::int64_t>(k, n));

    double lo[3], hi[3];
    for (int c = 0; c < 3; ++c) {
        lo[c] = std::numeric_limits<double>::infinity();
        hi[c] = -std::numeric_limits<double>::infinity();
    }
    for (std::int64_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = positions[static_cast<std::size_t>(3 * i + c)];
            lo[c] = std::min(lo[c], v);
            hi[c] = std::max(hi[c], v);
        }
    const double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], 1e-9});
    // Aim for a few points per cell.
    const double cells_per_axis = std::clamp(std::cbrt(static_cast<double>(n) / 2.0), 1.0, 256.0);
    const double cell = extent / cells_per_axis;

    auto cell_of = [&](const float* p, int axis) {
        return static_cast<std::int64_t>(std::floor((static_cast<double>(p[axis]) - lo[axis]) / cell));
    };
    auto key_of = [](std::int64_t cx, std::int64_t cy, std::int64_t cz) {
        return (static_cast<std::uint64_t>(cx) & 0x1fffff) |
               ((static_cast<std::uint64_t>(cy) & 0x1fffff) << 21) |
               ((static_cast<std::uint64_t>(cz) & 0x1fffff) << 42);
    };

    std::unordered_map<std::uint64_t, std::vector<std::int32_t>> grid;
    grid.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        const float* p = positions.data() + 3 * i;
        grid[key_of(cell_of(p, 0), cell_of(p, 1), cell_of(p, 2))].push_back(
            static_cast<std::int32_t>(i));
    }

    KnnResult out;
    out.k = keff;
    out.indices.resize(static_cast<std::size_t>(n) * keff);

    for (std::int64_t i = 0; i < n; ++i) {
        const float* pi = positions.data() + 3 * i;
        const std::int64_t c0[3] = {cell_of(pi, 0), cell_of(pi, 1), cell_of(pi, 2)};
        BestK best(keff);
        // Expand Chebyshev rings until every unvisited cell is provably
        // farther than the current k-th best. Points in ring rho+1 or beyond
        // are at least rho*cell away.
        for (std::int64_t rho = 0;; ++rho) {
            bool scanned_any = false;
            for (std::int64_t dz = -rho; dz <= rho; ++dz)
                for (std::int64_t dy = -rho; dy <= rho; ++dy)
                    for (std::int64_t dx = -rho; dx <= rho; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != rho) continue;
                        const auto it = grid.find(key_of(c0[0] + dx, c0[1] + dy, c0[2] + dz));
                        if (it == grid.end()) continue;
                        scanned_any = true;
                        for (std::int32_t j : it->second)
                            best.offer({sq_dist(pi, positions.data() + 3 * j), j});
                    }
            (void)scanned_any;
            // Strict comparison so an unscanned point tying on distance but
            // holding a smaller index can still displace the current worst.
            const double safe = static_cast<double>(rho) * cell;
            if (best.full() && best.worst() < safe * safe) break;
            if (rho > 2 * static_cast<std::int64_t>(cells_per_axis) + 2 && best.full()) break;
        }
        const auto sorted = best.sorted();
        for (int s = 0; s < keff; ++s)
            out.indices[static_cast<std::size_t>(i) * keff + static_cast<std::size_t>(s)] =
                sorted[static_cast<std::size_t>(s)].second;
    }
    return out;
}

}  // namespace vlg
