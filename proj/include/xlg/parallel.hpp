#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace xlg {

/// Splits [0, n) into `workers` contiguous ranges and runs fn(begin, end, worker)
/// on each. Ranges depend only on (n, workers). If several ranges throw, the
/// exception from the lowest range is rethrown so error reporting is stable.
template <typename Fn>
void parallel_ranges(std::size_t n, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, n));
    if (workers == 1) {
        if (n > 0) fn(std::size_t{0}, n, std::size_t{0});
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    const std::size_t base = n / workers;
    const std::size_t extra = n % workers;
    std::size_t begin = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t end = begin + base + (w < extra ? 1 : 0);
        threads.emplace_back([&, begin, end, w] {
            try {
                fn(begin, end, w);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
        begin = end;
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Runs fn(i) for every i in [0, n) across workers.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
    parallel_ranges(n, workers, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace xlg
