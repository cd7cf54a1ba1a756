#pragma once

#include <cstdint>
#include <functional>

namespace mgbp {

// Worker-thread cap: min(hardware_concurrency, MGBP_THREADS). Read once.
int worker_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
// thread; every index is processed by exactly one thread, so results are
// identical for any thread count as long as fn writes disjoint outputs.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& fn);

}  // namespace mgbp
