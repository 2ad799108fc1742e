/**
 * \file threading.hpp
 * \brief Block-partitioned parallel loop with a global worker cap.
 *
 * All parallel call sites write to per-index output slots, so results do not
 * depend on the number of workers.
 */
#pragma once

#include <cstddef>
#include <functional>

namespace kelo {

/// Caps worker threads process-wide. n <= 0 restores the hardware default.
void set_thread_cap(int n);
int thread_cap();

/// Runs body(begin, end) over contiguous index blocks covering [0, count).
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace kelo
