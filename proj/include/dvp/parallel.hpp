#pragma once

#include <cstddef>
#include <functional>

namespace dvp {

/// Worker cap: DVP_THREADS when set, otherwise the hardware concurrency.
std::size_t worker_count();

/// Splits [0, n) into `chunks` contiguous ranges and runs `fn(chunk, begin, end)`
/// for each, on up to worker_count() threads. Chunk boundaries depend only on
/// n and chunks, so per-chunk partial results reduce identically regardless
/// of the thread count.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace dvp
