#pragma once

#include <cstddef>
#include <functional>

namespace mechid {

unsigned default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. The first
/// exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace mechid
