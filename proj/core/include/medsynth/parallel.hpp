#pragma once

#include <cstddef>
#include <functional>

namespace medsynth {

// Calls fn(i) for i in [0, n) on up to `threads` workers. Work is handed out
// in index order; callers write results into per-index slots so the outcome
// never depends on the thread count. Exceptions from workers are rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace medsynth
