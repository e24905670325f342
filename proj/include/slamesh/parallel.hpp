#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace slamesh {

/// Fixed-size worker pool used for per-cell and per-layer loops. The calling
/// thread takes part in every parallel_for, so a pool of size 1 runs inline.
///
/// Work items are claimed dynamically, so callers must write results into
/// slots indexed by the item id and fold them in index order afterwards;
/// that keeps outputs identical for every thread count.
class ThreadPool {
 public:
  explicit ThreadPool(std::size_t threads = 1);
  ~ThreadPool();

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return workers_.size() + 1; }

  /// Runs fn(i) for every i in [0, count) and blocks until all are done. If
  /// any call throws, the exception from the lowest index is rethrown.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();
  void drain();

  std::vector<std::thread> workers_;
  std::mutex mu_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::size_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;

  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::size_t count_ = 0;
  std::atomic<std::size_t> next_{0};
  std::exception_ptr error_;
  std::size_t error_index_ = 0;
};

/// Runs inline when `pool` is null.
void parallel_for(ThreadPool* pool, std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace slamesh
