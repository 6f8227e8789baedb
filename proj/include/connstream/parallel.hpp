#pragma once

#include <cstddef>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

namespace connstream {

/// Worker-pool size: CONNSTREAM_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
int worker_count();

tbb::task_arena& worker_arena();

/// Runs body(begin, end) over disjoint chunks of [0, n) on the shared worker pool.
template <typename Body>
void parallel_chunks(std::size_t n, Body&& body, std::size_t grain = 1) {
  if (n == 0) return;
  worker_arena().execute([&] {
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, grain),
                      [&](const tbb::blocked_range<std::size_t>& r) { body(r.begin(), r.end()); });
  });
}

template <typename Body>
void parallel_for_each_index(std::size_t n, Body&& body, std::size_t grain = 1) {
  parallel_chunks(
      n,
      [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) body(k);
      },
      grain);
}

}  // namespace connstream
