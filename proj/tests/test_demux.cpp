#include <cmath>
#include <map>
#include <set>

#include "demux/demux.hpp"
#include "demux/tagproc.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace demux;

namespace {

constexpr std::int64_t kLoop = 6250;
constexpr std::int64_t kPeriod = 125000;
constexpr int kSlots = 20;

RandomStream stream(std::uint64_t index) {
  return make_stream(99, substream_id(StreamDomain::test, index));
}

EmitterParams emitter(double p_det, double g2 = 0.0) {
  EmitterParams e;
  e.rep_rate_hz = 160e6;
  e.p_det = p_det;
  e.g2_target = g2;
  return e;
}

EomWaveform rectangular() {
  EomWaveform w;
  w.rise_ns = 0;
  w.fall_ns = 0;
  w.on_duration_ns = 1.0;
  return w;
}

// Fitted chain of the experiment, solved by hand: r = t (1 - eps) and
// eta1 = fixed (p + (1 - p) eps).
DemuxParams reference_demux() {
  DemuxParams dp;
  dp.pbs_leak = 0.12;
  const double r = std::pow(0.14 / 0.73, 1.0 / 7.0);
  dp.loop_transmission = r / (1 - 0.12);
  dp.fixed_transmission = 0.73 / (0.95 + 0.05 * 0.12);
  return dp;
}

EomWaveform reference_waveform() {
  EomWaveform w;
  w.p_sw_max = 0.95;
  return w;
}

std::vector<double> mc_eta(const RouteResult& r, const DemuxParams& dp, std::vector<double>* sigma = nullptr) {
  const CycleLayout layout{kPeriod, kLoop, dp.n_outputs, 3000};
  std::vector<std::uint32_t> map;
  for (int k = 1; k <= dp.n_outputs; ++k) map.push_back(bin_to_channel(k, dp));
  std::vector<double> eta;
  for (const auto& e : channel_efficiency(r.outputs, r.monitor, layout, map)) {
    eta.push_back(e.value);
    if (sigma) sigma->push_back(e.sigma);
  }
  return eta;
}

std::int64_t slot_of(std::uint64_t t) {
  // emission offsets are shorter than one pulse separation
  return (static_cast<std::int64_t>(t) % kPeriod) / kLoop;
}

}  // namespace

TEST_CASE("waveform matches the trapezoid definition") {
  EomWaveform w;
  w.p_sw_max = 0.9;
  CHECK(w.at_ps(ns_to_ps(43.75 + 12.5)) == doctest::Approx(0.9));
  CHECK(w.at_ps(0) == 0.0);
  CHECK(w.at_ps(ns_to_ps(100)) == 0.0);
  CHECK(w.at_ps(ns_to_ps(43.75 - 2.5)) == doctest::Approx(0.45));
  CHECK(w.at_ps(ns_to_ps(43.75 + 25 + 2.5)) == doctest::Approx(0.45));
  CHECK(w.at_ps(ns_to_ps(43.75 + 12.5) + 7 * kPeriod) == doctest::Approx(0.9));
  CHECK(w.at_ps(ns_to_ps(43.75 + 12.5) - 3 * kPeriod) == doctest::Approx(0.9));
  for (std::int64_t t = -kPeriod; t < 2 * kPeriod; t += 250) {
    const double want = oracle::trapezoid(static_cast<double>(t) / 1000, 125, 43.75, 5, 25, 5, 0.9);
    REQUIRE(w.at_ps(t) == doctest::Approx(want).epsilon(1e-12));
    REQUIRE(eom_switch_prob(static_cast<double>(t) / 1000, w) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("bin to channel mapping") {
  DemuxParams dp;
  CHECK(bin_to_channel(1, dp) == 8);
  CHECK(bin_to_channel(8, dp) == 1);
  std::set<std::uint32_t> seen;
  for (int k = 1; k <= 8; ++k) seen.insert(bin_to_channel(k, dp));
  CHECK(seen == std::set<std::uint32_t>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK_THROWS_AS(bin_to_channel(0, dp), std::out_of_range);
  CHECK_THROWS_AS(bin_to_channel(9, dp), std::out_of_range);
}

TEST_CASE("demux validation") {
  DemuxParams dp;
  EomWaveform w;
  CHECK_NOTHROW(dp.validate(w));
  w.phase_ns = 30;
  CHECK_THROWS_WITH_AS(dp.validate(w), doctest::Contains("waveform.phase_ns"), ConfigError);
  w = {};
  w.phase_ns = 50;
  CHECK_THROWS_WITH_AS(dp.validate(w), doctest::Contains("waveform.phase_ns"), ConfigError);
  w = {};
  w.period_ns = 120;
  CHECK_THROWS_WITH_AS(dp.validate(w), doctest::Contains("multiple"), ConfigError);
  w = {};
  dp.pbs_leak = 1.2;
  CHECK_THROWS_WITH_AS(dp.validate(w), doctest::Contains("demux.pbs_leak"), ConfigError);
  dp = {};
  dp.n_outputs = 21;
  CHECK_THROWS_AS(dp.validate(w), ConfigError);
}

TEST_CASE("source and demux pulse separations must agree") {
  EmitterParams e;
  e.rep_rate_hz = 80e6;
  const auto em = sample_emission(e, 100, stream(0));
  CHECK_THROWS_AS(route(em, DemuxParams{}, EomWaveform{}, stream(1)), ConfigError);
}

TEST_CASE("ideal demultiplexer") {
  const DemuxParams dp;
  const EomWaveform w = rectangular();
  const std::int64_t n_cycles = 2000;
  const auto em = sample_emission(emitter(1.0), n_cycles * kSlots, stream(2));
  const auto r = route(em, dp, w, stream(3));

  for (std::uint32_t c = 1; c <= 8; ++c) {
    const auto& out = r.outputs[c - 1];
    CHECK(static_cast<std::int64_t>(out.size()) == n_cycles);
    for (const auto& t : out) {
      REQUIRE(t.channel == c);
      REQUIRE(slot_of(t.timestamp_ps) == 7);
    }
  }
  CHECK(r.ledger.exited() == 8 * n_cycles);
  CHECK(r.ledger.lost_overflow == 12 * n_cycles);
  CHECK(r.ledger.leaked == 0);
  CHECK(r.ledger.conserved());
  for (double eta : mc_eta(r, dp)) CHECK(eta == 1.0);
  CHECK(count_coincidences(r.outputs, 3000) == n_cycles);
}

TEST_CASE("plateau over later input bins only feeds channel 1 after release") {
  const DemuxParams dp;
  EomWaveform w;
  w.on_duration_ns = 50;
  const auto em = sample_emission(emitter(0.5), 40000, stream(4));
  const auto r = route(em, dp, w, stream(5));
  CHECK(r.ledger.conserved());
  std::int64_t extra = 0;
  for (std::uint32_t c = 1; c <= 8; ++c) {
    for (const auto& t : r.outputs[c - 1]) {
      const auto s = slot_of(t.timestamp_ps);
      if (c == 1) {
        REQUIRE(s >= 7);
        extra += s > 7;
      } else {
        REQUIRE(s == 7);
      }
    }
  }
  CHECK(extra > 0);
}

TEST_CASE("without leakage no loading-window tags appear on channels 2..N") {
  auto dp = reference_demux();
  dp.pbs_leak = 0.0;
  const auto em = sample_emission(emitter(0.5), 400000, stream(6));
  const auto r = route(em, dp, reference_waveform(), stream(7));
  for (std::uint32_t c = 2; c <= 8; ++c) {
    for (const auto& t : r.outputs[c - 1]) REQUIRE(slot_of(t.timestamp_ps) >= 7);
  }
}

TEST_CASE("analytic exit distribution is normalized") {
  std::vector<std::pair<DemuxParams, EomWaveform>> cases{{DemuxParams{}, EomWaveform{}},
                                                         {reference_demux(), reference_waveform()}};
  DemuxParams lossy;
  lossy.pbs_leak = 0.3;
  lossy.loop_transmission = 0.6;
  lossy.fixed_transmission = 0.5;
  lossy.detector_eff = 0.7;
  EomWaveform slow;
  slow.rise_ns = 3;
  slow.fall_ns = 12;
  slow.p_sw_max = 0.6;
  cases.emplace_back(lossy, slow);
  for (const auto& [dp, w] : cases) {
    for (std::int64_t s = 0; s < kSlots; ++s) {
      const auto d = exit_distribution(s * kLoop, dp, w);
      REQUIRE(std::abs(d.total() - 1.0) < 1e-12);
      for (const auto& e : d.exits) REQUIRE(e.prob >= 0.0);
    }
  }
}

TEST_CASE("analytic distribution is periodic in the EOM cycle") {
  const auto dp = reference_demux();
  const auto w = reference_waveform();
  for (std::int64_t s = 0; s < kSlots; ++s) {
    const auto a = exit_distribution(s * kLoop, dp, w);
    const auto b = exit_distribution(s * kLoop + 3 * kPeriod, dp, w);
    REQUIRE(a.exits.size() == b.exits.size());
    for (std::size_t i = 0; i < a.exits.size(); ++i) REQUIRE(a.exits[i].prob == b.exits[i].prob);
  }
}

TEST_CASE("Monte Carlo exits follow the analytic distribution") {
  const auto dp = reference_demux();
  const auto w = reference_waveform();
  const auto em = sample_emission(emitter(0.6), 2'000'000, stream(8));
  const auto r = route(em, dp, w, stream(9));

  std::map<std::int64_t, std::int64_t> entered;  // per entry slot
  for (const auto& t : r.monitor) ++entered[slot_of(t.timestamp_ps)];
  // expected (channel, exit slot) counts
  std::map<std::pair<std::uint32_t, std::int64_t>, double> expected;
  for (const auto& [s, n] : entered) {
    for (const auto& e : exit_distribution(s * kLoop, dp, w).exits) {
      expected[{e.channel, (s + e.loops) % kSlots}] += static_cast<double>(n) * e.prob;
    }
  }
  std::map<std::pair<std::uint32_t, std::int64_t>, std::int64_t> seen;
  for (const auto& out : r.outputs) {
    for (const auto& t : out) ++seen[{t.channel, slot_of(t.timestamp_ps)}];
  }
  // one chi-square over all well-populated cells; no observed tag may fall
  // in a cell of zero probability
  double chi2 = 0;
  int dof = 0;
  for (const auto& [cell, n] : seen) REQUIRE(expected[cell] > 0.0);
  for (const auto& [cell, mu] : expected) {
    if (mu < 20) continue;
    const double d = static_cast<double>(seen[cell]) - mu;
    chi2 += d * d / mu;
    ++dof;
  }
  REQUIRE(dof > 50);
  CHECK(chi2 < dof + 4 * std::sqrt(2.0 * dof));
}

TEST_CASE("channel efficiencies agree with the analytic chain") {
  const auto dp = reference_demux();
  const auto w = reference_waveform();
  const auto em = sample_emission(emitter(0.214), 4'000'000, stream(10));
  const auto r = route(em, dp, w, stream(11));
  std::vector<double> sigma;
  const auto eta = mc_eta(r, dp, &sigma);
  const auto want = analytic_channel_efficiency(dp, w);
  CHECK(want[0] == doctest::Approx(0.73).epsilon(1e-12));
  CHECK(want[7] == doctest::Approx(0.14).epsilon(1e-12));
  for (std::size_t j = 0; j < 8; ++j) {
    CHECK(std::abs(eta[j] - want[j]) < 3 * sigma[j]);
    if (j > 0) CHECK(eta[j] < eta[j - 1]);
  }
}

TEST_CASE("leak-only chain decays as (1 - eps)^(j-1)") {
  DemuxParams dp;
  dp.pbs_leak = 0.1;
  const EomWaveform w;
  const auto want = analytic_channel_efficiency(dp, w);
  for (int j = 1; j <= 8; ++j) CHECK(want[j - 1] == doctest::Approx(std::pow(0.9, j - 1)).epsilon(1e-12));

  const auto em = sample_emission(emitter(0.5), 1'000'000, stream(12));
  const auto r = route(em, dp, w, stream(13));
  std::vector<double> sigma;
  const auto eta = mc_eta(r, dp, &sigma);
  for (int j = 1; j <= 8; ++j) {
    CHECK(std::abs(eta[j - 1] - std::pow(0.9, j - 1)) < 3 * sigma[j - 1]);
    if (j > 1) CHECK(eta[j - 1] < eta[j - 2]);
  }
}

TEST_CASE("loss ledger balances per cycle and in total") {
  const auto em = sample_emission(emitter(0.214, 0.0157), 500000, stream(14));
  const auto r = route(em, reference_demux(), reference_waveform(), stream(15), Exec::parallel, {true});
  CHECK(r.ledger.entered == em.photon_count());
  CHECK(static_cast<std::int64_t>(r.monitor.size()) == em.photon_count());
  CHECK(r.ledger.conserved());
  LossLedger sum{0, std::vector<std::int64_t>(8, 0)};
  for (const auto& c : r.cycles) {
    REQUIRE(c.conserved());
    sum.add(c);
  }
  CHECK(sum.entered == r.ledger.entered);
  CHECK(sum.exited_by_channel == r.ledger.exited_by_channel);
  CHECK(sum.lost() == r.ledger.lost());
  std::int64_t tags = 0;
  for (const auto& o : r.outputs) tags += static_cast<std::int64_t>(o.size());
  CHECK(tags == r.ledger.exited());
  CHECK(r.ledger.switched + r.ledger.leaked == r.ledger.exited());
}

TEST_CASE("shifting the input by one EOM period shifts the output distribution") {
  const auto dp = reference_demux();
  const auto w = reference_waveform();
  const auto em = sample_emission(emitter(0.5), 1'000'000, stream(16));
  auto shifted = em;
  for (auto& ev : shifted.events) ev.bin_index += kSlots;
  shifted.n_pulses += kSlots;
  const auto a = route(em, dp, w, stream(17));
  const auto b = route(shifted, dp, w, stream(17));
  // two-sample chi-square over (channel, slot) cells
  std::map<std::pair<std::uint32_t, std::int64_t>, std::pair<double, double>> cells;
  for (const auto& o : a.outputs) {
    for (const auto& t : o) cells[{t.channel, slot_of(t.timestamp_ps)}].first += 1;
  }
  for (const auto& o : b.outputs) {
    for (const auto& t : o) cells[{t.channel, slot_of(t.timestamp_ps)}].second += 1;
  }
  double chi2 = 0;
  int dof = 0;
  for (const auto& [cell, ab] : cells) {
    if (ab.first + ab.second < 40) continue;
    const double d = ab.first - ab.second;
    chi2 += d * d / (ab.first + ab.second);
    ++dof;
  }
  REQUIRE(dof > 20);
  CHECK(chi2 < dof + 4 * std::sqrt(2.0 * dof));
  CHECK(a.ledger.entered == b.ledger.entered);
}

TEST_CASE("route is identical on the serial and parallel paths") {
  const auto em = sample_emission(emitter(0.5, 0.02), 300000, stream(18));
  const auto a = route(em, reference_demux(), reference_waveform(), stream(19), Exec::serial);
  const auto b = route(em, reference_demux(), reference_waveform(), stream(19), Exec::parallel);
  CHECK(a.monitor == b.monitor);
  CHECK(a.outputs == b.outputs);
  CHECK(a.ledger.exited_by_channel == b.ledger.exited_by_channel);
  CHECK(a.ledger.lost() == b.ledger.lost());
}
