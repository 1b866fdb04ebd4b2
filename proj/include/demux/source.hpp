#pragma once

// Monte Carlo model of the pulsed quantum-dot source and its two
// characterization benches (HBT auto-correlation, HOM two-photon interference).

#include <cstdint>
#include <vector>

#include "demux/model.hpp"

namespace demux {

struct EmitterParams {
  double rep_rate_hz = 80e6;
  double p_det = 0.214;      // detected photons per pulse at the demux input reference
  double g2_target = 0.0157;
  double indist = 0.9535;    // mean pairwise wavepacket overlap
  double lifetime_ps = 207.4;
  double rabi_damping = 0.0;

  /// Throws ConfigError on the first violated invariant.
  void validate() const;

  [[nodiscard]] std::int64_t pulse_period_ps() const;
  [[nodiscard]] double two_photon_prob() const { return g2_target * p_det * p_det / 2.0; }
  [[nodiscard]] double one_photon_prob() const { return p_det - 2.0 * two_photon_prob(); }
  /// Probability that a photon carries the common label. Two photons then
  /// share a label with probability indist.
  [[nodiscard]] double common_label_prob() const;
};

/// Detected count rate versus pulse area (in units of pi).
double rabi_rate(double pulse_area, const EmitterParams& params);

struct Emission {
  std::int64_t n_pulses = 0;
  std::int64_t pulse_period_ps = 0;
  std::vector<PhotonEvent> events;  // occupied bins only, ascending bin_index

  [[nodiscard]] std::int64_t photon_count() const;
};

/// Pulse b draws from rng.child(b), so the result does not depend on how
/// pulses are sharded across threads.
Emission sample_emission(const EmitterParams& params, std::int64_t n_pulses, const RandomStream& rng,
                         Exec exec = Exec::parallel);

struct BenchStreams {
  std::vector<TimeTag> a;  // channel 100
  std::vector<TimeTag> b;  // channel 101
};

/// Every photon goes to channel 100 or 101 with probability 1/2.
BenchStreams hbt_bench(const Emission& emission, const RandomStream& rng, Exec exec = Exec::parallel);

/// Interferes pulse pairs (2k, 2k+1) on a balanced beam splitter. Two single
/// photons with equal labels always bunch; any other content splits
/// independently. The pair is timestamped in bin 2k+1, so the HOM peak
/// spacing is twice the pulse period.
BenchStreams hom_bench(const Emission& emission, const RandomStream& rng, Exec exec = Exec::parallel);

}  // namespace demux
