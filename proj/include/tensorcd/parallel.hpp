#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tensorcd {

/// Worker count used when a caller passes 0. Reads TENSORCD_WORKERS once.
inline int default_workers() {
    static const int value = [] {
        if (const char* env = std::getenv("TENSORCD_WORKERS")) {
            int n = std::atoi(env);
            if (n > 0) return n;
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return value;
}

inline int resolve_workers(int workers) { return workers > 0 ? workers : default_workers(); }

/// Calls fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend only
/// on n and the worker count, so results that are reduced per chunk are reproducible.
template <class Fn>
void parallel_for(long n, int workers, Fn&& fn) {
    workers = resolve_workers(workers);
    if (n <= 0) return;
    long chunks = std::min<long>(workers, n);
    if (chunks <= 1) {
        fn(0L, n);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex guard;
    long step = (n + chunks - 1) / chunks;
    for (long c = 0; c < chunks; ++c) {
        long b = c * step, e = std::min(n, b + step);
        if (b >= e) break;
        pool.emplace_back([&, b, e] {
            try {
                fn(b, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(guard);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace tensorcd
