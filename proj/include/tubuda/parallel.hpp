#pragma once

#include <cstddef>
#include <functional>

namespace tubuda {

/// Worker count: hardware concurrency, capped by the TUBUDA_THREADS
/// environment variable when set.
int worker_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous index
/// ranges; callers must make each fn(i) write only to its own outputs so
/// results do not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tubuda
