#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace kfp {

// Thread cap: min(hardware, KFP_THREADS). KFP_THREADS=1 forces serial runs.
inline int max_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("KFP_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < hw) hw = cap;
  }
  return hw;
}

// Runs f(chunk_index, begin, end) over [0,n) in fixed-size chunks. Chunking is
// independent of the thread count, so per-chunk results can be combined in
// chunk order for reductions that do not depend on KFP_THREADS.
template <class F>
void parallel_chunks(std::int64_t n, std::int64_t chunk_size, F&& f) {
  if (n <= 0) return;
  const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int n_threads = static_cast<int>(std::min<std::int64_t>(max_threads(), n_chunks));
  if (n_threads <= 1) {
    for (std::int64_t c = 0; c < n_chunks; ++c)
      f(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= n_chunks) break;
      f(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace kfp
