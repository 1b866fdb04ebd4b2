#pragma once

// Run configuration. The file format is one "dotted.key = value" assignment
// per line; '#' starts a comment. Values are numbers, true/false, bare or
// double-quoted strings, or bracketed number lists (sweep axes only).
//
//   emitter.rep_rate_hz = 160e6
//   demux.n_outputs     = 8
//   sweep.grid.demux.pbs_leak = [0, 0.05, 0.1]
//
// Unknown keys are rejected, and every error names the key and its line.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "demux/demux.hpp"
#include "demux/rate_model.hpp"
#include "demux/source.hpp"
#include "demux/tagio.hpp"

namespace demux {

struct AnalysisParams {
  std::int64_t window_ps = 3000;
  int side_peaks = 10;
  int g2_exclusion = 0;
  int hom_exclusion = 1;
  std::int64_t corr_bin_ps = 50;
  std::int64_t trace_bin_ps = 250;
};

struct ChainSpec {
  std::optional<double> eta_first;
  std::optional<double> eta_last;
};

struct SweepSpec {
  std::string objective = "R_n";  // or "max_outputs"
  int n = 4;
  std::vector<SweepAxis> grid;
};

struct RunConfig {
  // Pulse separation defaults to the demux loop delay (160 MHz).
  EmitterParams emitter{.rep_rate_hz = 160e6};
  DemuxParams demux;
  EomWaveform waveform;
  GeometryParams geometry;
  std::int64_t n_pulses = 1'000'000;
  std::uint64_t seed = 42;
  std::string output_dir = "run";
  TagFormat tag_format = TagFormat::csv;
  bool benches = true;
  AnalysisParams analysis;
  ChainSpec chain;
  SweepSpec sweep;
  int predict_n = 0;  // 0: all outputs

  /// Cross-module invariants; throws ConfigError naming the offending key.
  void validate() const;
  [[nodiscard]] std::int64_t pulse_period_ps() const { return emitter.pulse_period_ps(); }
  [[nodiscard]] double duration_s() const { return static_cast<double>(n_pulses) / emitter.rep_rate_hz; }
  [[nodiscard]] double cycle_rate_hz() const { return 1e9 / waveform.period_ns; }
  [[nodiscard]] CycleLayout layout() const;
  [[nodiscard]] std::vector<std::uint32_t> bin_map() const;
};

/// Parses config text; `origin` names the source in error messages.
/// Assignments are applied in order, then chain derivation and validation.
class ConfigBuilder {
 public:
  ConfigBuilder();
  void parse_text(const std::string& text, const std::string& origin);
  void parse_file(const std::filesystem::path& path);
  /// "key=value" from the command line.
  void set(const std::string& assignment, const std::string& origin = "command line");
  void set(const std::string& key, const std::string& value, const std::string& origin);
  RunConfig build() const;

 private:
  void assign(const std::string& key, const std::string& value, const std::string& where);
  RunConfig cfg_;
  std::map<std::string, std::string> where_;  // key -> "file:line"
};

RunConfig load_config(const std::filesystem::path& path);

/// Applies a sweep point (values in axis order) on top of a builder and
/// rebuilds, so chain derivation and validation see the swept values.
RunConfig apply_point(const ConfigBuilder& base, const std::vector<SweepAxis>& grid, std::span<const double> point);

/// Canonical "key = value" dump, sorted by key; re-parsing reproduces the config.
std::string canonical_text(const RunConfig& cfg);

/// FNV-1a 64-bit hash as 16 hex digits.
std::string hash_hex(std::string_view data);

}  // namespace demux
