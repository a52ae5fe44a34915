#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <type_traits>
#include <vector>

namespace capsroute {

/// Worker count: CAPSROUTE_THREADS if set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t worker_threads();

/// Calls fn(i) for i in [0, n) on up to `threads` workers and returns the
/// results in index order. The first exception by index is rethrown.
template <class Fn>
auto parallel_map(std::size_t n, Fn&& fn, std::size_t threads = worker_threads())
    -> std::vector<std::invoke_result_t<Fn&, std::size_t>> {
  using Result = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<Result> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min(threads == 0 ? 1 : threads, n);
  if (count <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(count - 1);
    for (std::size_t t = 1; t < count; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace capsroute
