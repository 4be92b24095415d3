#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace rematch {

// Splits [0, n) into one contiguous chunk per worker. Chunk boundaries depend
// only on (n, workers), so chunk-local accumulation stays deterministic.
inline std::vector<std::pair<size_t, size_t>> chunk_ranges(size_t n, int workers) {
  std::vector<std::pair<size_t, size_t>> out;
  if (n == 0 || workers < 1) return out;
  size_t per = (n + workers - 1) / workers;
  for (size_t start = 0; start < n; start += per) {
    out.emplace_back(start, std::min(n, start + per));
  }
  return out;
}

// Runs fn(chunk_index, begin, end) on each chunk, one thread per chunk.
// The first exception thrown by any chunk is rethrown after all join.
inline void parallel_chunks(size_t n, int workers,
                            const std::function<void(size_t, size_t, size_t)>& fn) {
  auto ranges = chunk_ranges(n, workers);
  if (ranges.size() <= 1) {
    if (!ranges.empty()) fn(0, ranges[0].first, ranges[0].second);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(ranges.size());
  std::exception_ptr error;
  std::mutex error_mu;
  for (size_t c = 0; c < ranges.size(); ++c) {
    threads.emplace_back([&, c] {
      try {
        fn(c, ranges[c].first, ranges[c].second);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

inline int default_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 4 : static_cast<int>(hw);
}

}  // namespace rematch
