#pragma once

#include <algorithm>
#include <functional>
#include <thread>
#include <vector>

namespace liverseg {

// Splits [begin, end) into contiguous chunks, one per worker thread.
// Each output element must be written by exactly one index, so results are
// identical to a sequential run.
inline void parallel_for(int begin, int end, const std::function<void(int)>& body)
{
    int n = end - begin;
    if (n <= 0)
        return;
    unsigned hw = std::thread::hardware_concurrency();
    int workers = static_cast<int>(std::max(1u, hw));
    workers = std::min(workers, n);
    if (workers == 1) {
        for (int i = begin; i < end; ++i)
            body(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        int lo = begin + static_cast<int>(static_cast<long long>(n) * w / workers);
        int hi = begin + static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        threads.emplace_back([lo, hi, &body] {
            for (int i = lo; i < hi; ++i)
                body(i);
        });
    }
    for (auto& t : threads)
        t.join();
}

}  // namespace liverseg
