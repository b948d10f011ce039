#pragma once

#include <cstddef>
#include <functional>

namespace sigver {

// Worker-pool width: explicit set_worker_count() wins, then the
// SIGVER_THREADS environment variable, then hardware concurrency.
int worker_count();
void set_worker_count(int n);  // n <= 0 restores the default

// Runs fn(i) for i in [0, n). Work items must be independent; results should
// be written into caller-owned slots indexed by i, which keeps outputs
// identical for any worker count. Runs inline when n or the pool is 1.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sigver
