#pragma once

#include <cstddef>
#include <functional>

namespace emberflow {

// Worker cap used by the kernels. 0 means "one per hardware thread".
void set_thread_count(std::size_t n) noexcept;
std::size_t thread_count() noexcept;

// Reads EMBERFLOW_THREADS (unset or 0 = auto) and applies it.
void configure_threads_from_env();

// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each,
// possibly concurrently. Callers must only write outputs owned by their
// chunk; results are then independent of the worker count.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace emberflow
