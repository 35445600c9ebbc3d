#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace dforce {

// Worker cap for data-parallel loops. DFORCE_THREADS overrides the hardware
// default; results must never depend on it (callers reduce in fixed order).
inline int thread_budget() {
    if (const char* env = std::getenv("DFORCE_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v >= 1) return std::min(v, 256);
        } catch (...) {
            // fall through to the hardware default on junk values
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 16u));
}

// Runs fn(i) for i in [0, n) across at most `threads` workers in contiguous
// chunks. fn must write only to per-index slots; any reduction happens in the
// caller afterwards, in index order, so outputs are identical for any budget.
template <typename F>
void parallel_for(int n, F&& fn, int threads = -1) {
    if (n <= 0) return;
    if (threads < 0) threads = thread_budget();
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const int chunk = (n + threads - 1) / threads;
    for (int w = 0; w < threads; ++w) {
        const int lo = w * chunk;
        const int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] {
            for (int i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace dforce
