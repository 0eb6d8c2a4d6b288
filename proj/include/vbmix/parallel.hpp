#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

#include "vbmix/errors.hpp"

namespace vbmix {

/// Runs body(i) for i in [0, count) on at most `jobs` threads. Indices are claimed
/// dynamically; callers write into per-index slots so results never depend on scheduling.
/// body must not throw.
inline void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
  if (jobs < 1) throw ContractViolation("parallel_for: jobs must be >= 1");
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace vbmix
