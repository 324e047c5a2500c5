#ifndef PSOP_SRC_PARALLEL_H_
#define PSOP_SRC_PARALLEL_H_

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace psop::internal {

// Splits [0, n) into `workers` contiguous blocks and runs fn(begin, end) on
// each. Blocks write disjoint outputs, so the result does not depend on the
// worker count.
template <typename Fn>
void ParallelBlocks(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = static_cast<std::size_t>(std::max(1, workers));
  if (w == 1 || n < 2 * w) {
    fn(std::size_t{0}, n);
    return;
  }
  const std::size_t chunk = (n + w - 1) / w;
  std::vector<std::jthread> threads;
  threads.reserve(w - 1);
  for (std::size_t b = chunk; b < n; b += chunk) {
    const std::size_t e = std::min(n, b + chunk);
    threads.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(std::size_t{0}, std::min(n, chunk));
}

}  // namespace psop::internal

#endif  // PSOP_SRC_PARALLEL_H_
