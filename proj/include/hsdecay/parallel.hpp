#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hsdecay {

// Worker count: explicit request, capped by HALFSPACE_DECAY_THREADS when set.
// A request of 0 means "as many as the hardware offers".
inline std::size_t worker_count(std::size_t requested = 0) {
  std::size_t n = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
  if (char const* cap = std::getenv("HALFSPACE_DECAY_THREADS")) {
    try {
      long const c = std::stol(cap);
      if (c > 0) n = std::min(n, static_cast<std::size_t>(c));
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, n);
}

// out[i] = fn(i) for i in [0, count). Items are claimed dynamically, results
// land by index, so the output is independent of scheduling. The first
// exception (by item index) is rethrown after all workers finish.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t count, Fn&& fn, std::size_t threads = 0) {
  std::vector<Result> out(count);
  std::size_t const workers = std::min(worker_count(threads), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = count;
  std::exception_ptr err;
  auto work = [&] {
    for (;;) {
      std::size_t const i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out[i] = fn(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace hsdecay
