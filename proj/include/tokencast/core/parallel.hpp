#pragma once

#include <cstddef>
#include <functional>

namespace tokencast::core {

// Worker count: TOKENCAST_THREADS when set (>= 1), else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker;
// results must be written to per-index slots for output to be independent of
// the worker count. Exceptions are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tokencast::core
