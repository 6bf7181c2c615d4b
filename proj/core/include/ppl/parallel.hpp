#pragma once

#include <cstddef>
#include <functional>

namespace ppl {

// Worker cap: min(PPL_THREADS, hardware cores), at least 1. PPL_THREADS=1
// forces strictly serial execution.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous ranges, one
// per worker; each index is processed by exactly one thread. Callers must
// only write to per-index slots, which keeps results identical to the
// serial order regardless of thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ppl
