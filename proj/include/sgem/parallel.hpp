#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace sgem {

/// Worker count: explicit request wins, then SGEM_THREADS, then the hardware.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SGEM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

/// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
/// indices are striped across workers, so results never depend on scheduling.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    n_threads = std::min(n_threads, n);
    if (n_threads <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(std::size_t(n_threads));
    std::vector<std::exception_ptr> errors;
    errors.resize(std::size_t(n_threads));
    for (int t = 0; t < n_threads; ++t) {
        workers.emplace_back([&, t]() {
            try {
                for (int i = t; i < n; i += n_threads) fn(i);
            } catch (...) {
                errors[std::size_t(t)] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace sgem
