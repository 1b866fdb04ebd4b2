#pragma once

// Closed-form predictions: the constant-ratio channel-efficiency chain, the
// N-fold rate product formula, parameter sweeps, and the clear-aperture
// budget for Gaussian beams.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "demux/demux.hpp"
#include "demux/tagproc.hpp"

namespace demux {

struct ChainModel {
  double eta1 = 1.0;
  double r_loop = 1.0;  // loop_transmission * (1 - pbs_leak)
  double p_sw_max = 1.0;
  double fixed = 1.0;   // fixed_transmission * detector_eff

  /// eta1 * r_loop^(j-1), channel j >= 1.
  [[nodiscard]] double eta(int j) const;
  [[nodiscard]] std::vector<double> etas(int n) const;
};

/// Constant-ratio chain through (1, eta_first) and (n, eta_last).
ChainModel fit_chain(double eta_first, double eta_last, int n);

/// Chain implied by a demux configuration.
ChainModel chain_from_demux(const DemuxParams& dp, const EomWaveform& w);

/// Solves loop_transmission and fixed_transmission so that the demux
/// reproduces the chain, keeping pbs_leak, detector_eff and the waveform's
/// p_sw_max from the inputs. Throws ConfigError if a solved transmission
/// exceeds 1.
DemuxParams demux_from_chain(const ChainModel& chain, DemuxParams base, const EomWaveform& w);

/// R_n = f_cycle * prod_{i<=n} p_det * etas[i]. raw_counts and
/// poisson_sigma are the expectation over duration_s.
RateSummary predict_rn(double p_det, std::span<const double> etas, double f_cycle_hz, int n, double duration_s = 1.0);

struct GeometryParams {
  double wavelength_nm = 922.2;
  double waist_mm = 0.5;
  double loop_delay_ns = 1.0;
  double aperture_mm = 25.4;
  double spacing_factor = 1.49;  // see kCalibratedSpacing

  void validate() const;
};

inline constexpr double kSpeedOfLightMmPerNs = 299.792;

/// Beam-to-beam spacing in beam diameters, fixed once so that 1 mm beams with
/// a 1 ns loop fit 16 trajectories across a 1-inch clear aperture (the
/// largest factor giving 16 is 1.4974; rounded down).
inline constexpr double kCalibratedSpacing = 1.49;

double rayleigh_range_mm(const GeometryParams& g);
double effective_radius_mm(const GeometryParams& g);
int max_outputs(const GeometryParams& g);
/// Largest spacing factor for which max_outputs(g) >= target.
double calibrate_spacing(GeometryParams g, int target);

struct SweepAxis {
  std::string key;
  std::vector<double> values;
};

struct SweepRow {
  std::vector<double> point;  // one value per axis, in axis order
  double value = 0.0;
};

/// Evaluates the objective on the full Cartesian grid, sorted by descending
/// value with lexicographic tie-break on the point.
std::vector<SweepRow> sweep(std::span<const SweepAxis> grid,
                            const std::function<double(std::span<const double>)>& objective,
                            Exec exec = Exec::parallel);

}  // namespace demux
