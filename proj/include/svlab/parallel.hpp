// Deterministic data-parallel helper. Work is split into fixed contiguous
// chunks so every output element is computed by exactly one worker with a
// fixed serial accumulation order; results do not depend on the thread count.
#pragma once

#include <cstddef>
#include <functional>

namespace svlab {

// Worker count: SVLAB_THREADS env var if set, else hardware concurrency.
size_t thread_count();

// Calls body(begin, end) over disjoint subranges of [begin, end).
// Runs inline when the range is small or only one thread is configured.
void parallel_for(size_t begin, size_t end,
                  const std::function<void(size_t, size_t)>& body);

}  // namespace svlab
