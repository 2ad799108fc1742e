#include "kelo/threading.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace kelo {

namespace {
std::atomic<int> g_thread_cap{0};  // 0 = hardware default

int effective_cap() {
  int cap = g_thread_cap.load(std::memory_order_relaxed);
  if (cap <= 0) cap = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(cap, 1);
}
}  // namespace

void set_thread_cap(int n) { g_thread_cap.store(n, std::memory_order_relaxed); }

int thread_cap() { return effective_cap(); }

void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(effective_cap()), count);
  if (workers <= 1 || count < 256) {
    body(0, count);
    return;
  }

  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::atomic_flag error_set = ATOMIC_FLAG_INIT;

  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        if (!error_set.test_and_set()) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace kelo
