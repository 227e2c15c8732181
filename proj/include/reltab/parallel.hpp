#pragma once
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace reltab {

/// Runs fn(0..n) across up to `threads` workers. Work items own their output
/// slots, so results are identical for any thread count.
inline void parallel_for(size_t n, size_t threads,
                         const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  size_t workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace reltab
