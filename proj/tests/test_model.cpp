#include <algorithm>
#include <map>

#include "demux/model.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace demux;

TEST_CASE("random stream is a pure function of (seed, substream)") {
  RandomStream a(42, 0), b(42, 0), c(42, 1);
  bool any_differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    any_differs |= x != c.next_u64();
  }
  CHECK(any_differs);
  CHECK(a.position() == 1000);
}

TEST_CASE("child streams ignore the parent position") {
  RandomStream a(7, 3);
  const auto before = a.child(5).next_u64();
  for (int i = 0; i < 10; ++i) a.next_u64();
  CHECK(a.child(5).next_u64() == before);
  CHECK(a.child(5).next_u64() != a.child(6).next_u64());
}

TEST_CASE("uniform draws cover [0, 1) with the right moments") {
  RandomStream r(1, substream_id(StreamDomain::test, 0));
  const int n = 200000;
  double sum = 0, sum2 = 0, lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum2 += u * u;
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
  CHECK(lo < 1e-4);
  CHECK(hi > 1 - 1e-4);
}

TEST_CASE("bernoulli consumes one draw and honours the edge probabilities") {
  RandomStream r(3, 0);
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(r.bernoulli(0.0));
    CHECK(r.bernoulli(1.0));
  }
  CHECK(r.position() == 200);
}

TEST_CASE("exponential draws have the requested mean") {
  RandomStream r(9, 0);
  const int n = 400000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += r.exponential(207.4);
  const double sigma = 207.4 / std::sqrt(n);
  CHECK(std::abs(s / n - 207.4) < 3 * sigma);
}

TEST_CASE("substream ids keep domains apart") {
  CHECK(substream_id(StreamDomain::emission, 5) != substream_id(StreamDomain::routing, 5));
  CHECK((substream_id(StreamDomain::hbt, 0) >> 56) == 3);
}

TEST_CASE("sort_and_merge small cases") {
  CHECK(sort_and_merge(std::vector<TimeTag>{}).empty());
  const std::vector<TimeTag> in{{2, 10}, {1, 5}};
  const std::vector<TimeTag> want{{1, 5}, {2, 10}};
  CHECK(sort_and_merge(in) == want);
  const std::vector<TimeTag> tie{{3, 5}, {1, 5}};
  CHECK(sort_and_merge(tie) == std::vector<TimeTag>{{1, 5}, {3, 5}});
}

TEST_CASE("sort_and_merge equals a naive sort and keeps the multiset") {
  RandomStream r(11, 0);
  std::vector<TimeTag> tags(100000);
  for (auto& t : tags) t = {static_cast<std::uint32_t>(r.next_u64() % 9), r.next_u64() % 50000};
  const auto sorted = sort_and_merge(tags);
  REQUIRE(sorted.size() == tags.size());

  // naive oracle is quadratic, so compare on a prefix
  std::vector<TimeTag> head(tags.begin(), tags.begin() + 3000);
  CHECK(sort_and_merge(head) == oracle::naive_sort(head));

  std::map<std::uint32_t, int> before, after;
  for (const auto& t : tags) ++before[t.channel];
  for (const auto& t : sorted) ++after[t.channel];
  CHECK(before == after);
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    REQUIRE(std::tie(sorted[i - 1].timestamp_ps, sorted[i - 1].channel) <=
            std::tie(sorted[i].timestamp_ps, sorted[i].channel));
  }
}

TEST_CASE("merging streams equals sorting their concatenation") {
  RandomStream r(12, 0);
  std::vector<std::vector<TimeTag>> streams(4);
  std::vector<TimeTag> all;
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (int i = 0; i < 500; ++i) {
      streams[c].push_back({c, r.next_u64() % 10000});
      all.push_back(streams[c].back());
    }
  }
  CHECK(sort_and_merge(std::span<const std::vector<TimeTag>>(streams)) == oracle::naive_sort(all));
}

TEST_CASE("ns_to_ps rounds to nearest picosecond") {
  CHECK(ns_to_ps(6.25) == 6250);
  CHECK(ns_to_ps(125.0) == 125000);
  CHECK(ns_to_ps(0.0004) == 0);
  CHECK(ns_to_ps(0.0006) == 1);
}
