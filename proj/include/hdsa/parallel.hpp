#pragma once

#include <Eigen/Core>

#include <functional>

namespace hdsa {

// Number of worker threads: HDSA_THREADS if set, otherwise 1.
int default_threads();

// Calls body(j) for every j in [0, count). Work is split across up to
// `threads` std::threads by a fixed interleaved partition; body must only
// write state owned by index j. The first exception thrown is rethrown.
void parallel_for(Eigen::Index count, int threads, const std::function<void(Eigen::Index)>& body);

}  // namespace hdsa
