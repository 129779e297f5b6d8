#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>

namespace tspkit {

// Runs fn(0..count-1) across up to `threads` workers. Callers own any
// determinism concerns: results must land in per-index slots and any
// order-sensitive reduction must happen afterwards, in index order.
inline void parallel_for_indexed(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::clamp(threads, 1, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

inline int default_thread_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace tspkit
