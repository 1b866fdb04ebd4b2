#include "demux/model.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace demux {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool tag_less(const TimeTag& a, const TimeTag& b) {
  return std::tie(a.timestamp_ps, a.channel) < std::tie(b.timestamp_ps, b.channel);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t substream)
    : seed_(seed), substream_(substream), key_(mix64(seed ^ mix64(substream * kGolden + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

bool RandomStream::bernoulli(double p) {
  // always consumes one draw so stream positions do not depend on p
  const double u = uniform();
  return u < p;
}

double RandomStream::exponential(double mean) {
  return -mean * std::log1p(-uniform());
}

RandomStream RandomStream::child(std::uint64_t index) const {
  return RandomStream(key_, index);
}

RandomStream make_stream(std::uint64_t seed, std::uint64_t substream) {
  return RandomStream(seed, substream);
}

std::vector<TimeTag> sort_and_merge(std::vector<TimeTag> tags) {
  std::sort(tags.begin(), tags.end(), tag_less);
  return tags;
}

std::vector<TimeTag> sort_and_merge(std::span<const std::vector<TimeTag>> streams) {
  std::size_t total = 0;
  for (const auto& s : streams) total += s.size();
  std::vector<TimeTag> all;
  all.reserve(total);
  for (const auto& s : streams) all.insert(all.end(), s.begin(), s.end());
  return sort_and_merge(std::move(all));
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::int64_t ns_to_ps(double ns) {
  return std::llround(ns * 1000.0);
}

}  // namespace demux
