#pragma once

#include <cstddef>
#include <functional>

namespace nas::detail {

/// 0 means auto: NAS_THREADS if set to a positive integer, otherwise the
/// hardware concurrency.
unsigned resolve_thread_count(unsigned requested);

/// Runs body(i) for i in [0, n) over contiguous per-thread ranges. If any
/// call throws, the exception from the lowest failing index is rethrown
/// after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace nas::detail
