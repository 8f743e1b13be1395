#pragma once

#include <cstddef>
#include <functional>

namespace privdistill {

/// Worker count: PRIVDISTILL_THREADS when set and positive, otherwise the
/// hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) across worker_count() threads. Each index is
/// visited exactly once; callers write results into slot i so the outcome does
/// not depend on scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace privdistill
