#ifndef KNNCLEAN_PARALLEL_HPP
#define KNNCLEAN_PARALLEL_HPP

#include "knnclean/types.hpp"

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace knnclean {

/// Calls body(i) for i in [0, count), split into contiguous ranges over
/// worker_threads(). Each index is handled exactly once; callers write
/// results into per-index slots so output never depends on the split.
template <typename Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t threads = std::min<std::size_t>(worker_threads(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace knnclean

#endif  // KNNCLEAN_PARALLEL_HPP
