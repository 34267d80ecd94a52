#include "rmvs/parallel.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rmvs {
namespace {

std::atomic<int> g_num_threads{1};
thread_local bool t_in_parallel_region = false;

}  // namespace

void SetNumThreads(int num_threads) {
  if (num_threads < 1) {
    num_threads = std::max(1u, std::thread::hardware_concurrency());
  }
  g_num_threads.store(num_threads);
}

int NumThreads() { return g_num_threads.load(); }

void ParallelFor(int begin, int end, const std::function<void(int)>& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  const int workers = t_in_parallel_region ? 1 : std::min(NumThreads(), n);
  if (workers <= 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&, lo, hi] {
      t_in_parallel_region = true;
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace rmvs
