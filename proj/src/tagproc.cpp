#include "demux/tagproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace demux {
namespace {

std::int64_t ts(const TimeTag& t) {
  return static_cast<std::int64_t>(t.timestamp_ps);
}

// Position of t relative to center on the circle of circumference period,
// mapped to [-period/2, period/2).
std::int64_t wrapped_offset(std::int64_t t, std::int64_t center, std::int64_t period) {
  std::int64_t d = (t - center) % period;
  if (d < 0) d += period;
  if (d >= period - period / 2) d -= period;
  return d;
}

void correlate_range(std::span<const TimeTag> a, std::span<const TimeTag> b, std::size_t a_begin, std::size_t a_end,
                     std::int64_t max_delay, std::int64_t width, std::vector<std::int64_t>& counts) {
  if (a_begin >= a_end) return;
  const std::int64_t first = ts(a[a_begin]) - max_delay;
  std::size_t lo = static_cast<std::size_t>(
      std::lower_bound(b.begin(), b.end(), first, [](const TimeTag& t, std::int64_t v) { return ts(t) < v; }) -
      b.begin());
  for (std::size_t i = a_begin; i < a_end; ++i) {
    const std::int64_t ta = ts(a[i]);
    while (lo < b.size() && ts(b[lo]) < ta - max_delay) ++lo;
    for (std::size_t j = lo; j < b.size(); ++j) {
      const std::int64_t d = ts(b[j]) - ta;
      if (d > max_delay) break;
      ++counts[static_cast<std::size_t>((d + max_delay) / width)];
    }
  }
}

}  // namespace

std::int64_t Histogram::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

bool is_sorted_by_time(std::span<const TimeTag> tags) {
  return std::is_sorted(tags.begin(), tags.end(),
                        [](const TimeTag& x, const TimeTag& y) { return x.timestamp_ps < y.timestamp_ps; });
}

Histogram build_histogram(std::span<const TimeTag> tags, std::int64_t bin_width_ps, std::int64_t origin_ps,
                          std::size_t n_bins) {
  if (bin_width_ps < 1) throw ConfigError("histogram bin width must be >= 1 ps");
  Histogram h{bin_width_ps, origin_ps, std::vector<std::int64_t>(n_bins, 0), 0};
  const std::int64_t end = h.end_ps();
  for (const auto& t : tags) {
    const std::int64_t x = ts(t);
    if (x < origin_ps || x >= end) {
      ++h.out_of_range;
      continue;
    }
    ++h.counts[static_cast<std::size_t>((x - origin_ps) / bin_width_ps)];
  }
  return h;
}

Histogram correlate(std::span<const TimeTag> a, std::span<const TimeTag> b, std::int64_t max_delay_ps,
                    std::int64_t bin_width_ps, Exec exec) {
  if (bin_width_ps < 1) throw ConfigError("correlation bin width must be >= 1 ps");
  if (max_delay_ps < 0) throw ConfigError("correlation max delay must be >= 0");
  if (!is_sorted_by_time(a) || !is_sorted_by_time(b)) throw DataError("correlate: input streams must be sorted");

  Histogram h;
  h.bin_width_ps = bin_width_ps;
  h.origin_ps = -max_delay_ps;
  h.counts.assign(static_cast<std::size_t>(2 * max_delay_ps / bin_width_ps + 1), 0);

  if (exec == Exec::serial) {
    correlate_range(a, b, 0, a.size(), max_delay_ps, bin_width_ps, h.counts);
    return h;
  }
  const auto n = static_cast<std::int64_t>(a.size());
  constexpr std::int64_t kChunk = 1 << 14;
#pragma omp parallel
  {
    std::vector<std::int64_t> local(h.counts.size(), 0);
#pragma omp for schedule(dynamic) nowait
    for (std::int64_t c = 0; c < n; c += kChunk) {
      correlate_range(a, b, static_cast<std::size_t>(c), static_cast<std::size_t>(std::min(n, c + kChunk)),
                      max_delay_ps, bin_width_ps, local);
    }
#pragma omp critical(demux_correlate_merge)
    for (std::size_t i = 0; i < local.size(); ++i) h.counts[i] += local[i];
  }
  return h;
}

PeakSet integrate_peaks(const Histogram& h, std::vector<std::int64_t> centers_ps, std::int64_t window_ps) {
  if (window_ps < 1) throw ConfigError("peak window must be >= 1 ps");
  std::sort(centers_ps.begin(), centers_ps.end());
  for (std::size_t i = 1; i < centers_ps.size(); ++i) {
    if (centers_ps[i] - centers_ps[i - 1] < window_ps) throw ConfigError("peak windows overlap");
  }
  PeakSet p{std::move(centers_ps), window_ps, {}};
  p.areas.reserve(p.centers_ps.size());
  const std::int64_t half = window_ps / 2;
  for (auto c : p.centers_ps) {
    const std::int64_t lo = c - half;
    const std::int64_t hi = lo + window_ps;
    if (lo < h.origin_ps || hi > h.end_ps()) {
      throw DataError("peak window at " + std::to_string(c) + " ps falls outside the histogram");
    }
    // first bin starting at or after lo
    auto i = static_cast<std::size_t>((lo - h.origin_ps + h.bin_width_ps - 1) / h.bin_width_ps);
    std::int64_t area = 0;
    for (; i < h.counts.size() && h.bin_start(i) < hi; ++i) area += h.counts[i];
    p.areas.push_back(area);
  }
  return p;
}

std::int64_t correlation_range_ps(std::int64_t period_ps, const PeakBaseline& baseline) {
  return (baseline.exclusion + baseline.side_peaks) * period_ps + baseline.window_ps / 2;
}

G2Estimate g2_zero(const Histogram& corr, std::int64_t period_ps, const PeakBaseline& baseline) {
  if (baseline.side_peaks < 1) throw ConfigError("analysis.side_peaks must be >= 1");
  if (baseline.exclusion < 0) throw ConfigError("peak exclusion radius must be >= 0");
  if (period_ps < baseline.window_ps) throw ConfigError("peak window exceeds the peak period");

  std::vector<std::int64_t> centers{0};
  for (int k = baseline.exclusion + 1; k <= baseline.exclusion + baseline.side_peaks; ++k) {
    centers.push_back(k * period_ps);
    centers.push_back(-k * period_ps);
  }
  if (-centers.back() + baseline.window_ps / 2 > corr.end_ps() || centers.back() - baseline.window_ps / 2 < corr.origin_ps) {
    throw DataError("correlation histogram spans too few periods for the side-peak baseline");
  }
  const PeakSet peaks = integrate_peaks(corr, centers, baseline.window_ps);

  G2Estimate g;
  std::int64_t side_total = 0;
  for (std::size_t i = 0; i < peaks.centers_ps.size(); ++i) {
    if (peaks.centers_ps[i] == 0) {
      g.center_area = peaks.areas[i];
    } else {
      side_total += peaks.areas[i];
    }
  }
  if (side_total == 0) throw DataError("side peaks are empty; g2(0) is undefined");
  const auto n_side = static_cast<double>(2 * baseline.side_peaks);
  g.side_mean = static_cast<double>(side_total) / n_side;
  g.value = static_cast<double>(g.center_area) / g.side_mean;
  const double rel_side = 1.0 / static_cast<double>(side_total);
  const double c = static_cast<double>(g.center_area);
  g.sigma = std::sqrt(c + c * c * rel_side) / g.side_mean;
  return g;
}

double mean_photons_from_hom(double side_mean, std::int64_t total_tags) {
  if (total_tags <= 0) throw DataError("no tags to estimate the mean photon number");
  return 2.0 * side_mean / static_cast<double>(total_tags);
}

HomEstimate hom_indistinguishability(const Histogram& corr, double g2, std::int64_t period_ps,
                                     const HomOptions& options) {
  if (!(g2 >= 0.0 && g2 < 1.0)) throw ConfigError("g2 must be in [0, 1)");
  HomEstimate h;
  h.peaks = g2_zero(corr, period_ps, options.baseline);
  h.mean_photons = options.mean_photons.value_or(0.5);
  h.v_raw = 1.0 - 2.0 * h.peaks.value;
  const double denom = 1.0 - 2.0 * g2 * h.mean_photons;
  const double raw = (h.v_raw + g2) / denom;
  h.value = std::clamp(raw, 0.0, 1.0);
  h.clipped = raw != h.value;
  h.sigma = 2.0 * h.peaks.sigma / denom;
  return h;
}

std::int64_t count_in_window(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t center_ps,
                             std::int64_t window_ps) {
  const std::int64_t half = window_ps / 2;
  std::int64_t n = 0;
  for (const auto& t : tags) {
    const std::int64_t d = wrapped_offset(ts(t), center_ps, period_ps);
    if (d >= -half && d < window_ps - half) ++n;
  }
  return n;
}

std::vector<TimeTag> gate(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t center_ps,
                          std::int64_t window_ps) {
  const std::int64_t half = window_ps / 2;
  std::vector<TimeTag> out;
  for (const auto& t : tags) {
    const std::int64_t d = wrapped_offset(ts(t), center_ps, period_ps);
    if (d >= -half && d < window_ps - half) out.push_back(t);
  }
  return out;
}

std::vector<std::int64_t> grid_counts(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t grid_ps,
                                      std::int64_t window_ps) {
  if (grid_ps < 1 || period_ps % grid_ps != 0) throw ConfigError("grid spacing must divide the period");
  if (window_ps > grid_ps) throw ConfigError("grid window exceeds the grid spacing");
  const std::int64_t slots = period_ps / grid_ps;
  const std::int64_t half = window_ps / 2;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(slots), 0);
  for (const auto& t : tags) {
    const std::int64_t u = ts(t) % period_ps;
    const std::int64_t j = ((u + half) / grid_ps) % slots;
    const std::int64_t d = wrapped_offset(u, j * grid_ps, period_ps);
    if (d >= -half && d < window_ps - half) ++counts[static_cast<std::size_t>(j)];
  }
  return counts;
}

Histogram fold(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t bin_width_ps) {
  if (bin_width_ps < 1 || period_ps < 1) throw ConfigError("fold: period and bin width must be >= 1 ps");
  const auto n_bins = static_cast<std::size_t>((period_ps + bin_width_ps - 1) / bin_width_ps);
  Histogram h{bin_width_ps, 0, std::vector<std::int64_t>(n_bins, 0), 0};
  for (const auto& t : tags) {
    ++h.counts[static_cast<std::size_t>((ts(t) % period_ps) / bin_width_ps)];
  }
  return h;
}

std::vector<EtaEstimate> channel_efficiency(std::span<const std::vector<TimeTag>> outputs,
                                            std::span<const TimeTag> monitor, const CycleLayout& layout,
                                            std::span<const std::uint32_t> bin_map) {
  if (static_cast<int>(bin_map.size()) != layout.n_outputs) throw ConfigError("bin map size differs from n_outputs");
  std::vector<EtaEstimate> eta(static_cast<std::size_t>(layout.n_outputs));
  for (int k = 1; k <= layout.n_outputs; ++k) {
    const std::uint32_t ch = bin_map[static_cast<std::size_t>(k - 1)];
    if (ch < 1 || ch > outputs.size()) throw ConfigError("bin map names a channel without a stream");
    EtaEstimate& e = eta[ch - 1];
    e.channel = ch;
    e.input_counts = count_in_window(monitor, layout.period_ps, layout.entry_time_ps(k), layout.window_ps);
    e.output_counts = count_in_window(outputs[ch - 1], layout.period_ps, layout.release_time_ps(), layout.window_ps);
    if (e.input_counts == 0) {
      e.empty_reference = true;
      e.value = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const auto n = static_cast<double>(e.input_counts);
    e.value = static_cast<double>(e.output_counts) / n;
    e.sigma = std::sqrt(std::max(e.value * (1.0 - e.value), 1.0 / n) / n);
    e.excursion = e.value > 1.0 + 3.0 * e.sigma;
  }
  return eta;
}

RateSummary make_rate(int n, std::int64_t raw_counts, double duration_s) {
  RateSummary r{n, 0.0, raw_counts, duration_s, 0.0};
  if (duration_s > 0) {
    r.rate_hz = static_cast<double>(raw_counts) / duration_s;
    r.poisson_sigma = std::sqrt(static_cast<double>(raw_counts)) / duration_s;
  }
  return r;
}

std::int64_t count_coincidences(std::span<const std::vector<TimeTag>> streams, std::int64_t window_ps) {
  if (window_ps < 1) throw ConfigError("coincidence window must be >= 1 ps");
  if (streams.empty()) return 0;
  for (const auto& s : streams) {
    if (!is_sorted_by_time(s)) throw DataError("coincidence streams must be sorted");
  }
  std::vector<std::size_t> head(streams.size(), 0);
  std::int64_t found = 0;
  for (;;) {
    std::size_t earliest = 0;
    std::int64_t t_min = std::numeric_limits<std::int64_t>::max();
    std::int64_t t_max = std::numeric_limits<std::int64_t>::min();
    for (std::size_t c = 0; c < streams.size(); ++c) {
      if (head[c] == streams[c].size()) return found;
      const std::int64_t t = ts(streams[c][head[c]]);
      if (t < t_min) {
        t_min = t;
        earliest = c;
      }
      t_max = std::max(t_max, t);
    }
    if (t_max - t_min <= window_ps) {
      ++found;
      for (auto& h : head) ++h;
    } else {
      // some channel has nothing within window of the earliest head, so that
      // tag can never complete a coincidence
      ++head[earliest];
    }
  }
}

std::vector<RateSummary> nfold_coincidences(std::span<const std::vector<TimeTag>> streams, double duration_s,
                                            std::int64_t window_ps) {
  std::vector<RateSummary> rates;
  rates.reserve(streams.size());
  for (std::size_t n = 1; n <= streams.size(); ++n) {
    rates.push_back(make_rate(static_cast<int>(n), count_coincidences(streams.first(n), window_ps), duration_s));
  }
  return rates;
}

}  // namespace demux
