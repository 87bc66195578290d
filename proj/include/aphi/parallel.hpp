#pragma once

#include <functional>
#include <string>

namespace aphi {

// Resolve the worker count: explicit value if > 0, else ANDERSON_PHI42_WORKERS, else 1.
int resolve_workers(int requested);

// Run task(c) for c in [0, chunks) on up to `workers` threads. Chunks are the unit of work and
// of randomness, so results do not depend on the worker count. After all threads join, the exception of the
// lowest failing chunk is rethrown.
void parallel_chunks(int chunks, int workers, const std::function<void(int)>& task);

}  // namespace aphi
