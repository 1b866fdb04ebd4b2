#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "demux/model.hpp"

namespace demux::detail {

inline constexpr std::int64_t kBlockSize = 1 << 15;

// Runs fill(begin, end, out) over [0, n) and concatenates the per-block
// outputs in index order. The serial path is a single call over the whole
// range; results match whenever fill treats items independently.
template <typename T, typename Fill>
std::vector<T> gather_blocks(std::int64_t n, Exec exec, Fill&& fill) {
  std::vector<T> out;
  if (n <= 0) return out;
  if (exec == Exec::serial) {
    fill(std::int64_t{0}, n, out);
    return out;
  }
  const std::int64_t n_blocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<std::vector<T>> parts(static_cast<std::size_t>(n_blocks));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < n_blocks; ++b) {
    fill(b * kBlockSize, std::min(n, (b + 1) * kBlockSize), parts[static_cast<std::size_t>(b)]);
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.reserve(total);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace demux::detail
