#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace grfp {

// Worker cap: GRFP_THREADS if set, otherwise the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("GRFP_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, n) across workers. Callers keep determinism by
// writing into per-index slots and reducing in index order afterwards.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::min(n, worker_count());
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace grfp
