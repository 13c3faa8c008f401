#pragma once

#include <cstddef>
#include <functional>

namespace modeforge {

// Worker count resolution: explicit request if > 0, else MODEFORGE_THREADS,
// else the hardware concurrency (at least 1).
int resolve_thread_count(int requested = 0);

// Runs body(i) for i in [0, n).  Work items must be independent; results must
// be written to per-index slots so that the overall outcome is identical for
// any worker count.  The first exception (by lowest index) is rethrown.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace modeforge
