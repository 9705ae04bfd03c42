#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace hypermarg {

namespace detail {
inline std::atomic<int>& thread_cap_override() {
  static std::atomic<int> cap{0};
  return cap;
}
}  // namespace detail

/// Upper bound on worker threads for probe-parallel loops. Reads
/// HYPERMARG_THREADS unless overridden with set_thread_cap().
inline int thread_cap() {
  if (int cap = detail::thread_cap_override().load(); cap > 0) return cap;
  if (const char* env = std::getenv("HYPERMARG_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// 0 restores the environment default.
inline void set_thread_cap(int cap) { detail::thread_cap_override().store(cap); }

/// Runs body(i) for i in [0, n). Each index is handled by exactly one worker;
/// callers write results by index so output never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(thread_cap()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Fixed-order pairwise summation.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

}  // namespace hypermarg
