#pragma once

#include <functional>

namespace lfu {

/// Worker count used when callers pass 0. Defaults to the hardware
/// concurrency; LFU_THREADS overrides it.
int default_threads();
void set_default_threads(int threads);

/// Runs fn(0..count-1) on up to `threads` workers. Work is claimed in
/// index order; results must be written to per-index slots so reductions
/// stay independent of scheduling. The exception of the lowest failing index
/// is rethrown after all workers stop.
void parallel_for(int count, const std::function<void(int)>& fn, int threads = 0);

}  // namespace lfu
