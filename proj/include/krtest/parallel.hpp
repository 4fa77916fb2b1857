#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <thread>
#include <vector>

namespace krtest {

// Portable counting semaphore (std::counting_semaphore fixes the ceiling at
// compile time, which does not fit runtime-configured in-flight bounds).
class Semaphore {
 public:
  explicit Semaphore(size_t count) : count_(count) {}

  void acquire() {
    std::unique_lock<std::mutex> lk(m_);
    cv_.wait(lk, [&] { return count_ > 0; });
    --count_;
  }

  void release() {
    {
      std::lock_guard<std::mutex> lk(m_);
      ++count_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex m_;
  std::condition_variable cv_;
  size_t count_;
};

class SemaphoreGuard {
 public:
  explicit SemaphoreGuard(Semaphore& s) : s_(s) { s_.acquire(); }
  ~SemaphoreGuard() { s_.release(); }
  SemaphoreGuard(const SemaphoreGuard&) = delete;
  SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

 private:
  Semaphore& s_;
};

// Runs fn(i) for i in [0, n) on up to max_workers threads. fn must not throw;
// callers capture failures per index. Results keyed by index, so aggregation
// stays independent of completion order.
template <typename Fn>
void parallel_for(size_t n, size_t max_workers, Fn&& fn) {
  size_t workers = std::min(max_workers == 0 ? 1 : max_workers, n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace krtest
