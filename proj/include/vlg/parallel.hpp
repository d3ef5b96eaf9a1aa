#pragma once

#include <cstdint>
#include <thread>
#include <vector>

namespace vlg {

// Chunked parallel loop over [0, n). The body must only write to per-index
// state so results do not depend on scheduling.
template <typename Fn>
void parallel_for(std::int64_t n, int workers, Fn&& body) {
    if (workers <= 1 || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    const int threads = static_cast<int>(std::min<std::int64_t>(workers, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const std::int64_t chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        pool.emplace_back([lo, hi, &body] {
            for (std::int64_t i = lo; i < hi; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace vlg
