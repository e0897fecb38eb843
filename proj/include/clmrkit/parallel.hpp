#pragma once

#include <cstdint>
#include <functional>

namespace clmrkit {

// Process-wide worker count for data-parallel kernels. 0 = hardware default.
void set_worker_count(int workers);
int worker_count();

// Runs fn over contiguous chunks of [0, n). Each chunk is processed serially,
// so any reduction inside a chunk keeps a fixed order; results are identical
// for any worker count as long as chunks write disjoint outputs.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& fn);

} // namespace clmrkit
