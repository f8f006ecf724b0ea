#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace resx {

// Runs fn(0..count-1) across at most `jobs` worker threads. Tasks must be
// independent; callers keep determinism by writing to per-index slots.
template <typename Fn>
void parallel_for(std::size_t jobs, std::size_t count, Fn&& fn) {
    if (count == 0) return;
    if (jobs <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> threads;
    const std::size_t workers = jobs < count ? jobs : count;
    threads.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
}

}  // namespace resx
