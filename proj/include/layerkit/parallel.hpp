#pragma once

#include <cstddef>
#include <functional>

namespace layerkit {

/// Worker count: LAYERKIT_THREADS if set to a positive integer, otherwise
/// std::thread::hardware_concurrency() (at least 1).
std::size_t worker_count();

/// Calls body(i) for every i in [0, n), possibly concurrently. Callers write
/// results into pre-sized slots indexed by i, so output order never depends
/// on scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace layerkit
