#pragma once

// Time-tag analytics: histograms, pair correlation, peak integration,
// g2(0), HOM indistinguishability, demux channel efficiency and N-fold
// coincidence rates.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "demux/model.hpp"

namespace demux {

struct Histogram {
  std::int64_t bin_width_ps = 1;
  std::int64_t origin_ps = 0;
  std::vector<std::int64_t> counts;
  std::int64_t out_of_range = 0;

  [[nodiscard]] std::int64_t bin_start(std::size_t i) const {
    return origin_ps + static_cast<std::int64_t>(i) * bin_width_ps;
  }
  [[nodiscard]] std::int64_t end_ps() const { return bin_start(counts.size()); }
  [[nodiscard]] std::int64_t total() const;
};

/// counts[i] = #tags in [origin + i*w, origin + (i+1)*w).
Histogram build_histogram(std::span<const TimeTag> tags, std::int64_t bin_width_ps, std::int64_t origin_ps,
                          std::size_t n_bins);

/// Histogram of tB - tA over all pairs with |tB - tA| <= max_delay_ps, bins
/// starting at -max_delay_ps. Both streams must be sorted by timestamp
/// (DataError otherwise).
Histogram correlate(std::span<const TimeTag> a, std::span<const TimeTag> b, std::int64_t max_delay_ps,
                    std::int64_t bin_width_ps, Exec exec = Exec::parallel);

struct PeakSet {
  std::vector<std::int64_t> centers_ps;
  std::int64_t window_ps = 3000;
  std::vector<std::int64_t> areas;
};

/// Sums histogram bins whose start lies in [c - window/2, c + window/2).
PeakSet integrate_peaks(const Histogram& h, std::vector<std::int64_t> centers_ps, std::int64_t window_ps);

struct PeakBaseline {
  std::int64_t window_ps = 3000;
  int side_peaks = 10;  // per side
  int exclusion = 0;    // neighbours of the central peak skipped per side
};

/// Smallest correlation range that holds every peak a baseline needs.
std::int64_t correlation_range_ps(std::int64_t period_ps, const PeakBaseline& baseline);

struct G2Estimate {
  double value = 0.0;
  double sigma = 0.0;
  std::int64_t center_area = 0;
  double side_mean = 0.0;
};

/// Central peak area over the mean side-peak area.
G2Estimate g2_zero(const Histogram& corr, std::int64_t period_ps, const PeakBaseline& baseline = {});

struct HomOptions {
  PeakBaseline baseline{3000, 10, 1};
  /// Mean detected photons per pulse, for the multi-photon correction.
  /// Unset uses 1/2, where the correction reads (V + g2) / (1 - g2).
  std::optional<double> mean_photons;
};

struct HomEstimate {
  double value = 0.0;
  double sigma = 0.0;
  double v_raw = 0.0;
  double mean_photons = 0.5;
  bool clipped = false;
  G2Estimate peaks;
};

/// Text of the correction recorded in analysis metadata.
inline constexpr const char* kHomCorrection = "I = (V_raw + g2) / (1 - 2 * g2 * mu), V_raw = 1 - 2 * A0 / A_side";

/// Raw visibility V = 1 - 2 A0 / A_side corrected to first order in g2 for
/// the multi-photon component: I = (V + g2) / (1 - 2 g2 mu), mu the mean
/// detected photon number per pulse. Clipped to [0, 1].
HomEstimate hom_indistinguishability(const Histogram& corr, double g2, std::int64_t period_ps,
                                     const HomOptions& options = {});

/// mu from a HOM correlation: mean side-peak area over half the total tags.
double mean_photons_from_hom(double side_mean, std::int64_t total_tags);

/// Tags whose time modulo period lies in [center - width/2, center + width/2),
/// with the window wrapping around the period.
std::int64_t count_in_window(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t center_ps,
                             std::int64_t window_ps);
std::vector<TimeTag> gate(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t center_ps,
                          std::int64_t window_ps);

/// Counts per laser grid slot of one period: element j holds the tags within
/// the window around in-period time j * grid_ps.
std::vector<std::int64_t> grid_counts(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t grid_ps,
                                      std::int64_t window_ps);

/// Tag times folded onto one period, for time-trace plots.
Histogram fold(std::span<const TimeTag> tags, std::int64_t period_ps, std::int64_t bin_width_ps);

struct CycleLayout {
  std::int64_t period_ps = 125000;
  std::int64_t loop_ps = 6250;
  int n_outputs = 8;
  std::int64_t window_ps = 3000;

  [[nodiscard]] std::int64_t entry_time_ps(int k) const { return (k - 1) * loop_ps; }
  [[nodiscard]] std::int64_t release_time_ps() const { return (n_outputs - 1) * loop_ps; }
};

struct EtaEstimate {
  std::uint32_t channel = 0;
  double value = 0.0;
  double sigma = 0.0;
  std::int64_t output_counts = 0;
  std::int64_t input_counts = 0;
  bool empty_reference = false;
  bool excursion = false;  // value > 1 + 3 sigma
};

/// bin_map[k-1] is the output channel of entry bin k. Result is indexed by
/// channel (element 0 is channel 1).
std::vector<EtaEstimate> channel_efficiency(std::span<const std::vector<TimeTag>> outputs,
                                            std::span<const TimeTag> monitor, const CycleLayout& layout,
                                            std::span<const std::uint32_t> bin_map);

struct RateSummary {
  int n = 0;
  double rate_hz = 0.0;
  std::int64_t raw_counts = 0;
  double duration_s = 0.0;
  double poisson_sigma = 0.0;
};

RateSummary make_rate(int n, std::int64_t raw_counts, double duration_s);

/// Greedy earliest-first n-fold matching across all given streams: each tag
/// joins at most one coincidence, and all members lie within window_ps of
/// each other.
std::int64_t count_coincidences(std::span<const std::vector<TimeTag>> streams, std::int64_t window_ps);

/// R_n for the channel prefix {1..n}, n = 1..streams.size().
std::vector<RateSummary> nfold_coincidences(std::span<const std::vector<TimeTag>> streams, double duration_s,
                                            std::int64_t window_ps = 3000);

bool is_sorted_by_time(std::span<const TimeTag> tags);

}  // namespace demux
