#include "clmrkit/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace clmrkit {

namespace {
std::atomic<int> g_workers{0};
}

void set_worker_count(int workers) { g_workers.store(workers < 0 ? 0 : workers); }

int worker_count() {
    int w = g_workers.load();
    if (w > 0) return w;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int workers = std::min<int64_t>(worker_count(), n);
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) {
        int64_t begin = w * chunk;
        int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    fn(0, std::min<int64_t>(chunk, n));
    for (auto& t : pool) t.join();
}

} // namespace clmrkit
