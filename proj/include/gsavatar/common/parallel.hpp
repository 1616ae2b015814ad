#pragma once

#include <cstddef>
#include <functional>

namespace gsavatar {

/// Worker count from GSAVATAR_WORKERS (default 1, clamped to [1, 64]).
int worker_count();

/// Runs body(chunk) for chunk in [0, chunks) on up to worker_count() threads.
/// Callers keep results worker-count independent by writing per-chunk
/// outputs and reducing them in chunk order.
void parallel_for_chunks(std::size_t chunks, const std::function<void(std::size_t)>& body);

}  // namespace gsavatar
