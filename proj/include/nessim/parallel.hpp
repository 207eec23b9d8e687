#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace nessim {

/// Worker count: NESS_THREADS if set and positive, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("NESS_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(chunk, begin, end) for the chunks [k·chunk_size, (k+1)·chunk_size) ∩ [0, n).
/// Chunk boundaries depend only on n and chunk_size, never on the thread count,
/// so a caller that stores one partial result per chunk and merges them in
/// chunk order gets bit-identical output for any NESS_THREADS. The first
/// exception thrown by a body is rethrown after all workers stop.
template <typename Body>
void parallel_chunks(std::uint64_t n, std::uint64_t chunk_size, Body&& body, unsigned threads = 0) {
  if (n == 0) return;
  chunk_size = std::max<std::uint64_t>(1, chunk_size);
  const std::uint64_t chunks = (n + chunk_size - 1) / chunk_size;
  if (threads == 0) threads = worker_count();
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, chunks));

  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t c = next.fetch_add(1);
      if (c >= chunks || failed.load()) return;
      try {
        body(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

inline std::uint64_t chunk_count(std::uint64_t n, std::uint64_t chunk_size) {
  chunk_size = std::max<std::uint64_t>(1, chunk_size);
  return (n + chunk_size - 1) / chunk_size;
}

}  // namespace nessim
