#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace tailcal {

// Worker cap: TAILCAL_THREADS when set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t worker_count();

// Splits [0, n) into fixed-size chunks and evaluates `chunk_sum(begin, end)`
// for each, possibly on several threads. Partial sums are combined in chunk
// order, so the result does not depend on how many workers ran.
double chunked_sum(std::size_t n, std::size_t chunk_size,
                   const std::function<double(std::size_t, std::size_t)>& chunk_sum);

// Runs `task(i)` for i in [0, count) across the worker pool.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& task);

}  // namespace tailcal
