#pragma once

#include <cstddef>
#include <functional>

namespace mirage {

// Worker cap from MIRAGE_THREADS (0 or unset = hardware concurrency).
std::size_t thread_cap();

// Runs fn(0..n-1) across up to thread_cap() workers. Task results must be
// written to disjoint slots; the schedule never affects values, only timing.
void parallel_tasks(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mirage
