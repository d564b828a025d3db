#pragma once

#include <cstddef>
#include <functional>

namespace raretab {

/// Worker count used by parallel_for. 0 restores the default (hardware concurrency).
void set_thread_count(unsigned threads);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Calls made from inside another parallel_for
/// run serially on the calling worker. The first exception thrown by any task
/// is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace raretab
