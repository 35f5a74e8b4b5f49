#ifndef MASKLAB_PARALLEL_HPP
#define MASKLAB_PARALLEL_HPP

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace masklab {

inline unsigned worker_count() {
    if (const char* env = std::getenv("MASKLAB_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Each index writes only its own outputs, so the
// result is identical to the serial loop regardless of thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = worker_count();
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned used = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::vector<std::thread> threads;
    threads.reserve(used);
    for (unsigned w = 0; w < used; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += used) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

}  // namespace masklab

#endif  // MASKLAB_PARALLEL_HPP
