#include "ftl/core.hpp"

#include <atomic>
#include <cstdlib>

namespace ftl {

namespace {
std::atomic<int> g_worker_override{0};

int default_workers() {
  if (const char* env = std::getenv("FRACTAL_TRACE_LAB_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? int(hw) : 1;
}
}  // namespace

int worker_count() {
  int o = g_worker_override.load();
  return o > 0 ? o : default_workers();
}

void set_worker_count(int n) { g_worker_override.store(n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t nthreads = std::min<std::size_t>(std::size_t(workers), n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace ftl
