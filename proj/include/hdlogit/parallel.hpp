#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hdlogit {

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Calls fn(i) for i in [0, count) on up to `workers` threads (0 = all cores).
/// The first exception thrown by any task is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  if (workers <= 0) {
    workers = default_workers();
  }
  const auto threads = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(workers), count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) {
        return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
        next.store(count);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back(body);
  }
  for (auto& th : pool) {
    th.join();
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

} // namespace hdlogit
