#pragma once

// Subcommand implementations behind the demuxsim CLI.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "demux/config.hpp"

namespace demux {

/// Output file names inside a run directory.
struct RunLayout {
  static std::string monitor(TagFormat f);
  static std::string channel(int c, TagFormat f);
  static std::string hbt(TagFormat f);
  static std::string hom(TagFormat f);
  static constexpr const char* kLedger = "ledger.json";
  static constexpr const char* kManifest = "manifest.json";
};

struct SimulateResult {
  std::filesystem::path dir;
  LossLedger ledger;
  std::vector<std::filesystem::path> files;
};

/// Runs source + demux (+ benches) and writes tag files, the loss ledger and
/// the manifest. Byte-identical for equal config regardless of thread count.
SimulateResult cmd_simulate(const RunConfig& cfg);

nlohmann::json ledger_json(const LossLedger& ledger);

/// In-memory form of a run, as read back from disk.
struct RunData {
  std::vector<TimeTag> monitor;
  std::vector<std::vector<TimeTag>> outputs;
  std::vector<TimeTag> hbt_a, hbt_b, hom_a, hom_b;
  bool has_demux = false;
  bool has_hbt = false;
  bool has_hom = false;
};

RunData load_run(const std::filesystem::path& dir, const RunConfig& cfg);

/// Analysis report {g2, I, eta_ch, R_n, R_n_release, bin_counts, flags,
/// metadata}. When plot_dir is set, CSV histograms are written there.
nlohmann::json analyze_run(const RunData& data, const RunConfig& cfg,
                           const std::optional<std::filesystem::path>& plot_dir = std::nullopt);

/// Loads the run directory and writes report.json plus plot CSVs to out_dir.
nlohmann::json cmd_analyze(const std::filesystem::path& run_dir, const RunConfig& cfg,
                           const std::filesystem::path& out_dir);

/// Builder seeded with the config embedded in a run manifest, or defaults
/// when the directory has no manifest.
ConfigBuilder manifest_config(const std::filesystem::path& run_dir);

/// Chain used for predictions: fitted endpoints when given, else derived
/// from the demux parameters.
ChainModel prediction_chain(const RunConfig& cfg);

nlohmann::json cmd_predict(const RunConfig& cfg);
std::string predict_csv(const nlohmann::json& prediction);

std::vector<SweepRow> cmd_sweep(const ConfigBuilder& base);
std::string sweep_csv(const RunConfig& cfg, const std::vector<SweepRow>& rows);
nlohmann::json sweep_json(const RunConfig& cfg, const std::vector<SweepRow>& rows);

nlohmann::json cmd_geometry(const RunConfig& cfg);

/// Objective used by sweep for one configuration.
double sweep_objective(const RunConfig& cfg);

}  // namespace demux
