#pragma once

#include <cstddef>
#include <functional>

namespace gapa {

/// Worker count: hardware concurrency, capped by the GAPA_THREADS
/// environment variable when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Iterations are split into contiguous
/// blocks across workers; callers write to disjoint slots so the result does
/// not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gapa
