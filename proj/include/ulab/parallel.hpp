#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace ulab {

// Static-stride parallel loop. Each index writes only its own slot, so the
// result is identical for every thread count.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const auto t_count = static_cast<std::size_t>(threads);
    std::vector<std::thread> pool;
    pool.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
        pool.emplace_back([&fn, t, t_count, n] {
            for (std::size_t i = t; i < n; i += t_count) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace ulab
