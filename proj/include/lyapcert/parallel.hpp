#pragma once

#include <cstddef>
#include <functional>

namespace lyapcert {

// Process-wide worker cap. 0 or 1 means run inline on the calling thread.
void set_num_threads(unsigned n);
unsigned num_threads();

// Calls body(i) for i in [0, n). Work is split into contiguous blocks; callers
// write results into per-index slots so output never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lyapcert
