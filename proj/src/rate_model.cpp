#include "demux/rate_model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>

namespace demux {

double ChainModel::eta(int j) const {
  return eta1 * std::pow(r_loop, j - 1);
}

std::vector<double> ChainModel::etas(int n) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int j = 1; j <= n; ++j) out.push_back(eta(j));
  return out;
}

ChainModel fit_chain(double eta_first, double eta_last, int n) {
  if (n < 2) throw ConfigError("fit_chain: n must be >= 2");
  if (!(eta_last > 0 && eta_last <= eta_first && eta_first <= 1)) {
    throw ConfigError("fit_chain: need 0 < eta_last <= eta_first <= 1");
  }
  ChainModel c;
  c.eta1 = eta_first;
  c.r_loop = std::pow(eta_last / eta_first, 1.0 / (n - 1));
  return c;
}

ChainModel chain_from_demux(const DemuxParams& dp, const EomWaveform& w) {
  dp.validate(w);
  ChainModel c;
  c.p_sw_max = w.p_sw_max;
  c.fixed = dp.fixed_transmission * dp.detector_eff;
  c.r_loop = dp.loop_transmission * (1.0 - dp.pbs_leak);
  c.eta1 = c.fixed * (w.p_sw_max + (1.0 - w.p_sw_max) * dp.pbs_leak);
  return c;
}

DemuxParams demux_from_chain(const ChainModel& chain, DemuxParams base, const EomWaveform& w) {
  if (base.pbs_leak >= 1.0) throw ConfigError("demux.pbs_leak must be < 1 to realize a chain");
  const double release = w.p_sw_max + (1.0 - w.p_sw_max) * base.pbs_leak;
  if (release <= 0.0 || base.detector_eff <= 0.0) throw ConfigError("chain: release probability is zero");
  base.loop_transmission = chain.r_loop / (1.0 - base.pbs_leak);
  base.fixed_transmission = chain.eta1 / (base.detector_eff * release);
  if (base.loop_transmission > 1.0) {
    throw ConfigError("demux.loop_transmission: chain needs " + std::to_string(base.loop_transmission) +
                      " > 1 for this pbs_leak");
  }
  if (base.fixed_transmission > 1.0) {
    throw ConfigError("demux.fixed_transmission: chain needs " + std::to_string(base.fixed_transmission) +
                      " > 1 for this p_sw_max and detector_eff");
  }
  return base;
}

RateSummary predict_rn(double p_det, std::span<const double> etas, double f_cycle_hz, int n, double duration_s) {
  if (n < 0 || static_cast<std::size_t>(n) > etas.size()) throw ConfigError("predict_rn: n exceeds the efficiency list");
  double rate = f_cycle_hz;
  for (int i = 0; i < n; ++i) rate *= p_det * etas[static_cast<std::size_t>(i)];
  RateSummary r;
  r.n = n;
  r.rate_hz = rate;
  r.duration_s = duration_s;
  r.raw_counts = std::llround(rate * duration_s);
  r.poisson_sigma = duration_s > 0 ? std::sqrt(rate / duration_s) : 0.0;
  return r;
}

void GeometryParams::validate() const {
  if (!(wavelength_nm > 0)) throw ConfigError("geometry.wavelength_nm must be > 0");
  if (!(waist_mm > 0)) throw ConfigError("geometry.waist_mm must be > 0");
  if (!(loop_delay_ns > 0)) throw ConfigError("geometry.loop_delay_ns must be > 0");
  if (!(aperture_mm >= 0)) throw ConfigError("geometry.aperture_mm must be >= 0");
  if (!(spacing_factor >= 1)) throw ConfigError("geometry.spacing_factor must be >= 1");
}

double rayleigh_range_mm(const GeometryParams& g) {
  return std::numbers::pi * g.waist_mm * g.waist_mm / (g.wavelength_nm * 1e-6);
}

double effective_radius_mm(const GeometryParams& g) {
  const double path = kSpeedOfLightMmPerNs * g.loop_delay_ns;
  const double x = path / rayleigh_range_mm(g);
  return g.waist_mm * std::sqrt(1.0 + x * x);
}

int max_outputs(const GeometryParams& g) {
  g.validate();
  const double pitch = g.spacing_factor * 2.0 * effective_radius_mm(g);
  if (!(pitch > 0) || !std::isfinite(pitch)) throw ConfigError("geometry: non-positive beam pitch");
  return static_cast<int>(std::floor(g.aperture_mm / pitch));
}

double calibrate_spacing(GeometryParams g, int target) {
  if (target < 1) throw ConfigError("calibrate_spacing: target must be >= 1");
  g.spacing_factor = 1.0;
  g.validate();
  return g.aperture_mm / (target * 2.0 * effective_radius_mm(g));
}

std::vector<SweepRow> sweep(std::span<const SweepAxis> grid,
                            const std::function<double(std::span<const double>)>& objective, Exec exec) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  std::int64_t n_points = 1;
  for (const auto& axis : grid) {
    if (axis.values.empty()) throw ConfigError("sweep: axis '" + axis.key + "' has no values");
    n_points *= static_cast<std::int64_t>(axis.values.size());
  }
  std::vector<SweepRow> rows(static_cast<std::size_t>(n_points));
  for (std::int64_t i = 0; i < n_points; ++i) {
    std::int64_t rem = i;
    auto& point = rows[static_cast<std::size_t>(i)].point;
    point.resize(grid.size());
    for (std::size_t a = grid.size(); a-- > 0;) {
      const auto m = static_cast<std::int64_t>(grid[a].values.size());
      point[a] = grid[a].values[static_cast<std::size_t>(rem % m)];
      rem /= m;
    }
  }
  if (exec == Exec::serial) {
    for (auto& row : rows) row.value = objective(row.point);
  } else {
    // objective may throw; rethrow the failure of the lowest grid index so
    // the reported error does not depend on scheduling
    std::exception_ptr failure;
    std::int64_t failed_at = n_points;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n_points; ++i) {
      try {
        auto& row = rows[static_cast<std::size_t>(i)];
        row.value = objective(row.point);
      } catch (...) {
#pragma omp critical(demux_sweep_error)
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& x, const SweepRow& y) {
    if (x.value != y.value) return x.value > y.value;
    return x.point < y.point;
  });
  return rows;
}

}  // namespace demux
