#pragma once

#include <cstddef>
#include <functional>

namespace entangle {

/// Worker pool size. Reads ENTANGLE_THREADS, falls back to the hardware
/// concurrency. Never less than 1.
int worker_count();

/// Override the pool size for the current process (0 restores the default).
void set_worker_count(int workers);

/// Runs body(i) for i in [0, count). Work items are claimed dynamically, so
/// body must only write to per-index state; results are then independent of
/// the number of workers.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace entangle
