#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace s3kit {

// Worker cap: S3KIT_THREADS, 0 or unset means auto.
inline unsigned worker_count() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("S3KIT_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0 && static_cast<unsigned>(cap) < hw) return static_cast<unsigned>(cap);
    }
    return hw;
}

// Runs fn(i) for i in [0, n). Results must be written to index-addressed
// slots by the caller; the reduction over them stays sequential, so output
// ordering does not depend on scheduling. The first worker exception is
// rethrown after the join.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = worker_count();
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::mutex mu;
    std::exception_ptr failure;
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&fn, &mu, &failure, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace s3kit
