#pragma once

// Single-active-element demultiplexer: one EOM with a periodic trapezoidal
// switching profile, a chain of N loop positions, and a PBS exit at each
// position.
//
// Timing within one EOM cycle (in-cycle time u = t mod period):
//   loading bins      u = 0, tau, ..., (N-1) tau   (entry bin k = 1..N)
//   release bin       u = (N-1) tau                 (all loaded photons exit)
// The photon entering in bin k loops N-k times and exits channel N+1-k.
//
// Each photon is advanced one loop (one position) per loop delay. At every
// position the EOM switch probability is evaluated on the laser grid time of
// that pass; a switched photon exits at its current position, an unswitched
// one may still leak out through the PBS with probability pbs_leak. A photon
// that passes position N unswitched leaves the chain and is booked as
// overflow loss.

#include <cstdint>
#include <vector>

#include "demux/model.hpp"
#include "demux/source.hpp"

namespace demux {

struct EomWaveform {
  double period_ns = 125.0;
  double on_duration_ns = 25.0;
  double rise_ns = 5.0;
  double fall_ns = 5.0;
  double p_sw_max = 1.0;
  double phase_ns = 43.75;  // plateau start relative to the cycle origin

  void validate() const;

  [[nodiscard]] std::int64_t period_ps() const { return ns_to_ps(period_ns); }
  /// Switch probability at an integer-picosecond time.
  [[nodiscard]] double at_ps(std::int64_t t_ps) const;
};

/// Trapezoid: linear rise to p_sw_max, plateau, linear fall, zero elsewhere;
/// periodic in period_ns.
double eom_switch_prob(double t_ns, const EomWaveform& w);

struct DemuxParams {
  int n_outputs = 8;
  double loop_delay_ns = 6.25;
  double pbs_leak = 0.0;
  double loop_transmission = 1.0;
  double fixed_transmission = 1.0;
  double detector_eff = 1.0;

  /// Checks ranges and that the waveform is phased for this chain: no
  /// switching on loading bins 1..N-1 and the plateau covering the release bin.
  void validate(const EomWaveform& w) const;

  [[nodiscard]] std::int64_t loop_delay_ps() const { return ns_to_ps(loop_delay_ns); }
  [[nodiscard]] std::int64_t release_offset_ps() const { return (n_outputs - 1) * loop_delay_ps(); }
};

/// Entry bin k in 1..N -> output channel N+1-k.
std::uint32_t bin_to_channel(int k, const DemuxParams& dp);

enum class Fate : std::uint8_t { exited, lost_loop, lost_coupling, lost_detector, lost_overflow };

struct ExitOutcome {
  std::uint32_t channel = 0;
  int loops = 0;
  bool switched = false;  // false: loading-phase PBS leak
  double prob = 0.0;      // detected exit probability
};

struct ExitDistribution {
  std::vector<ExitOutcome> exits;
  double lost_loop = 0.0;
  double lost_coupling = 0.0;
  double lost_detector = 0.0;
  double lost_overflow = 0.0;

  [[nodiscard]] double exit_total() const;
  [[nodiscard]] double total() const;
  /// Detected probability of exiting `channel` after exactly `loops` loops.
  [[nodiscard]] double prob(std::uint32_t channel, int loops) const;
};

/// Exact outcome distribution of one photon entering at grid time entry_ps.
ExitDistribution exit_distribution(std::int64_t entry_ps, const DemuxParams& dp, const EomWaveform& w);

/// Probability that the photon of entry bin k reaches channel N+1-k in the
/// release bin and is detected, indexed by channel (element 0 is channel 1).
std::vector<double> analytic_channel_efficiency(const DemuxParams& dp, const EomWaveform& w);

struct LossLedger {
  std::int64_t entered = 0;
  std::vector<std::int64_t> exited_by_channel;  // index c-1 for channel c
  std::int64_t switched = 0;
  std::int64_t leaked = 0;
  std::int64_t lost_loop = 0;
  std::int64_t lost_coupling = 0;
  std::int64_t lost_detector = 0;
  std::int64_t lost_overflow = 0;

  [[nodiscard]] std::int64_t exited() const;
  [[nodiscard]] std::int64_t lost() const;
  [[nodiscard]] bool conserved() const { return entered == exited() + lost(); }
  void add(const LossLedger& other);
};

struct RouteOptions {
  bool per_cycle_ledger = false;
};

struct RouteResult {
  std::vector<TimeTag> monitor;               // channel 0: every photon entering
  std::vector<std::vector<TimeTag>> outputs;  // outputs[c-1] holds channel c, sorted
  LossLedger ledger;
  std::vector<LossLedger> cycles;             // filled when per_cycle_ledger is set
};

/// Photon j of bin b draws from rng.child(2b + j).
RouteResult route(const Emission& emission, const DemuxParams& dp, const EomWaveform& w, const RandomStream& rng,
                  Exec exec = Exec::parallel, RouteOptions options = {});

}  // namespace demux
