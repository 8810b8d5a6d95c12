#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace strongstab {

/// Worker count: hardware concurrency capped by the STRONGSTAB_THREADS
/// environment variable (>=1).
inline int worker_count(int tasks) {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("STRONGSTAB_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return std::min(hw, tasks > 0 ? tasks : 1);
}

/// Runs fn(i) for i in [0, n) on a bounded pool. Each index is independent;
/// results must be written to per-index slots by the caller.
inline void parallel_for_indexed(int n, const std::function<void(int)>& fn) {
  const int workers = worker_count(n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

}  // namespace strongstab
