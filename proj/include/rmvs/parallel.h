#pragma once

#include <functional>

namespace rmvs {

// Process-wide worker count used by the per-pixel and per-hypothesis loops.
// Values < 1 select std::thread::hardware_concurrency().
void SetNumThreads(int num_threads);
int NumThreads();

// Runs fn(i) for every i in [begin, end) using static contiguous chunks.
// Callers must only write to index-owned outputs; any reduction is done
// afterwards in index order so results never depend on the thread count.
void ParallelFor(int begin, int end, const std::function<void(int)>& fn);

}  // namespace rmvs
