#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace lensrig {

// Runs fn(i) for i in [0, n). Each index owns its output slot, so results are
// identical for any thread count. threads = 0 means hardware concurrency.
inline void parallelFor(std::size_t n, const std::function<void(std::size_t)>& fn,
                        int threads = 0) {
  if (threads == 0) threads = (int)std::thread::hardware_concurrency();
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  int k = std::min<std::size_t>(threads, n);
  pool.reserve(k);
  for (int t = 0; t < k; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace lensrig
