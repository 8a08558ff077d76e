#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace tsexam::detail {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception is rethrown after all
/// workers stop; remaining indices are skipped once one fails.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace tsexam::detail
