#pragma once

#include "hyperfuse/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace hyperfuse::detail {

// Calls body(i) for every i in [0, n). Each index is handled by exactly one
// thread, so per-index results are independent of the thread count.
template <typename Body>
void parallel_for(std::size_t n, std::size_t work_per_index, Body&& body) {
    constexpr std::size_t kMinParallelWork = 1 << 14;
    const auto threads = static_cast<std::size_t>(num_threads());
    if (threads <= 1 || n < 2 || n * work_per_index < kMinParallelWork) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const std::size_t workers = std::min(threads, n);
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &body] {
            for (std::size_t i = begin; i < end; ++i) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace hyperfuse::detail
