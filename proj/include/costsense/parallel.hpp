#pragma once

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace costsense {

/// Run fn(i) for i in [0, n). jobs <= 1 runs serially in-order; otherwise a
/// fixed block partition is used so the result does not depend on scheduling.
/// The first exception thrown by any worker is rethrown on the caller.
inline void parallel_for(long n, int jobs, const std::function<void(long)>& fn) {
    if (n <= 0) return;
    if (jobs <= 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    int workers = static_cast<int>(std::min<long>(jobs, n));
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    long chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        long lo = w * chunk;
        long hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] {
            try {
                for (long i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace costsense
