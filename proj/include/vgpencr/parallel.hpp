#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "vgpencr/types.hpp"

namespace vgpencr {

// Runs fn(i) for i in [0, count) on up to n_threads workers pulling from a
// shared counter. Results must be written to per-index slots by the caller;
// the first exception is rethrown after all workers join.
template <typename Fn>
void parallel_for(Index count, Index n_threads, Fn&& fn) {
  if (count <= 0) return;
  n_threads = std::min<Index>(std::max<Index>(n_threads, 1), count);
  if (n_threads == 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_threads));
  for (Index t = 0; t < n_threads; ++t) {
    workers.emplace_back([&] {
      while (true) {
        const Index i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace vgpencr
