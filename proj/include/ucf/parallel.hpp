#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ucf {

/// Worker cap for data-parallel loops. Reads UCF_THREADS; unset or 0 means
/// "auto" (hardware concurrency), anything else is taken literally. The cap
/// never changes results — parallel_for assigns each index a fixed slot — it
/// only bounds how many threads may touch them at once.
inline int thread_budget() {
  const char* env = std::getenv("UCF_THREADS");
  long long want = 0;
  if (env != nullptr && *env != '\0') {
    char* end = nullptr;
    want = std::strtoll(env, &end, 10);
    if (end == nullptr || *end != '\0' || want < 0)
      throw std::runtime_error(std::string("UCF_THREADS: invalid value '") +
                               env + "'");
  }
  if (want == 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    want = hw == 0 ? 1 : static_cast<long long>(hw);
  }
  return static_cast<int>(want);
}

/// Runs fn(i) for i in [0, n) split into contiguous per-thread ranges.
/// fn must write only to slot i of any shared output, so the result is
/// identical for every thread count, including the inline single-thread path.
template <typename Fn>
inline void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  const int budget = thread_budget();
  const std::int64_t workers =
      std::min<std::int64_t>(budget, n);
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (std::int64_t w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace ucf
