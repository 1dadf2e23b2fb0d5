#include "svlab/parallel.hpp"

#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace svlab {

namespace {

size_t read_thread_count() {
  if (const char* env = std::getenv("SVLAB_THREADS")) {
    long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<size_t>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Minimal run-to-completion pool: submit() blocks until all chunks finish.
class Pool {
 public:
  explicit Pool(size_t workers) {
    for (size_t i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void run(const std::function<void(size_t, size_t)>& body,
           const std::vector<std::pair<size_t, size_t>>& chunks) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      body_ = &body;
      chunks_ = &chunks;
      next_chunk_ = 0;
      pending_ = chunks.size();
    }
    wake_.notify_all();
    // The caller participates too.
    drain();
    std::unique_lock<std::mutex> lock(mutex_);
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
    chunks_ = nullptr;
  }

 private:
  void drain() {
    for (;;) {
      size_t idx;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        if (chunks_ == nullptr || next_chunk_ >= chunks_->size()) return;
        idx = next_chunk_++;
      }
      (*body_)((*chunks_)[idx].first, (*chunks_)[idx].second);
      std::lock_guard<std::mutex> lock(mutex_);
      if (--pending_ == 0) done_.notify_all();
    }
  }

  void worker_loop() {
    for (;;) {
      {
        std::unique_lock<std::mutex> lock(mutex_);
        wake_.wait(lock, [this] {
          return stop_ || (chunks_ != nullptr && next_chunk_ < chunks_->size());
        });
        if (stop_) return;
      }
      drain();
    }
  }

  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  std::vector<std::thread> threads_;
  const std::function<void(size_t, size_t)>* body_ = nullptr;
  const std::vector<std::pair<size_t, size_t>>* chunks_ = nullptr;
  size_t next_chunk_ = 0;
  size_t pending_ = 0;
  bool stop_ = false;
};

}  // namespace

size_t thread_count() {
  static size_t n = read_thread_count();
  return n;
}

void parallel_for(size_t begin, size_t end,
                  const std::function<void(size_t, size_t)>& body) {
  if (begin >= end) return;
  size_t n = end - begin;
  size_t workers = thread_count();
  if (workers <= 1 || n < 2) {
    body(begin, end);
    return;
  }
  size_t chunk_count = std::min(n, workers * 4);
  std::vector<std::pair<size_t, size_t>> chunks;
  chunks.reserve(chunk_count);
  size_t base = n / chunk_count;
  size_t rem = n % chunk_count;
  size_t at = begin;
  for (size_t i = 0; i < chunk_count; ++i) {
    size_t len = base + (i < rem ? 1 : 0);
    chunks.emplace_back(at, at + len);
    at += len;
  }
  static Pool pool(thread_count() - 1);
  pool.run(body, chunks);
}

}  // namespace svlab
