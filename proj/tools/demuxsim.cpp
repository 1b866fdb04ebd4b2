// demuxsim: simulate, analyze and predict a time-to-spatial demultiplexed
// single-photon source.
//
//   demuxsim simulate --config configs/reference.cfg --out run
//   demuxsim analyze run --out run/analysis
//   demuxsim predict --config configs/reference.cfg --format csv
//   demuxsim sweep --config configs/sweep.cfg
//   demuxsim geometry --set geometry.loop_delay_ns=6.25
//
// Exit codes: 0 success, 2 config error, 3 data error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "demux/commands.hpp"

namespace {

enum class Exit { ok = 0, internal = 1, config = 2, data = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string format;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed) {
  cmd->add_option("--config", c.config, "Config file (dotted.key = value lines)");
  if (with_seed) cmd->add_option("--seed", c.seed, "Root seed, overrides run.seed");
  cmd->add_option("--set", c.sets, "Override a config key: key=value (repeatable)");
}

demux::ConfigBuilder builder_from(const Common& c, demux::ConfigBuilder b = {}) {
  if (!c.config.empty()) b.parse_file(c.config);
  for (const auto& s : c.sets) b.set(s);
  if (c.seed) b.set("run.seed", std::to_string(*c.seed), "--seed");
  return b;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    demux::write_file(out, text);
  }
}

void require_format(const std::string& got, std::initializer_list<const char*> allowed, const char* cmd) {
  for (const char* a : allowed) {
    if (got == a) return;
  }
  throw demux::ConfigError(std::string("--format ") + got + " is not supported by " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-to-spatial demultiplexing simulator and analyzer"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--threads", c.threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  const std::vector<std::string> formats{"csv", "binary", "json"};

  auto* sim = app.add_subcommand("simulate", "Run source and demultiplexer, write time-tag files");
  add_common(sim, c, true);
  sim->add_option("--format", c.format, "Tag file format")->check(CLI::IsMember(formats));
  sim->add_option("--out", c.out, "Output directory, overrides run.output_dir");

  std::string run_dir;
  auto* ana = app.add_subcommand("analyze", "Analyze a run directory into report.json and plot CSVs");
  ana->add_option("run_dir", run_dir, "Directory written by simulate")->required();
  add_common(ana, c, false);
  ana->add_option("--format", c.format, "Report format")->check(CLI::IsMember(formats));
  ana->add_option("--out", c.out, "Report directory (default: <run_dir>/analysis)");

  auto* pre = app.add_subcommand("predict", "Predict n-fold rates from the efficiency chain");
  add_common(pre, c, false);
  pre->add_option("--format", c.format, "Table format")->check(CLI::IsMember(formats));
  pre->add_option("--out", c.out, "Output file (default: stdout)");

  auto* swp = app.add_subcommand("sweep", "Evaluate the objective over sweep.grid.* axes, best first");
  add_common(swp, c, false);
  swp->add_option("--format", c.format, "Table format")->check(CLI::IsMember(formats));
  swp->add_option("--out", c.out, "Output file (default: stdout)");

  auto* geo = app.add_subcommand("geometry", "Maximum outputs supported by the loop optics");
  add_common(geo, c, false);
  geo->add_option("--format", c.format, "Table format")->check(CLI::IsMember(formats));
  geo->add_option("--out", c.out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(Exit::config);
  }

  try {
    if (c.threads > 0) demux::set_threads(c.threads);

    if (sim->parsed()) {
      auto b = builder_from(c);
      if (!c.format.empty()) {
        require_format(c.format, {"csv", "binary"}, "simulate");
        b.set("run.tag_format", c.format, "--format");
      }
      if (!c.out.empty()) b.set("run.output_dir", c.out, "--out");
      const auto res = demux::cmd_simulate(b.build());
      std::cout << "wrote " << res.files.size() << " files to " << res.dir.string() << "\n";
    } else if (ana->parsed()) {
      if (!c.format.empty()) require_format(c.format, {"json"}, "analyze");
      auto b = c.config.empty() ? demux::manifest_config(run_dir) : demux::ConfigBuilder{};
      b = builder_from(c, std::move(b));
      const std::filesystem::path out = c.out.empty() ? std::filesystem::path(run_dir) / "analysis" : std::filesystem::path(c.out);
      demux::cmd_analyze(run_dir, b.build(), out);
      std::cout << "wrote " << (out / "report.json").string() << "\n";
    } else if (pre->parsed()) {
      const auto cfg = builder_from(c).build();
      const auto table = demux::cmd_predict(cfg);
      if (c.format.empty() || c.format == "json") {
        emit(table.dump(2) + "\n", c.out);
      } else {
        require_format(c.format, {"csv"}, "predict");
        emit(demux::predict_csv(table), c.out);
      }
    } else if (swp->parsed()) {
      const auto b = builder_from(c);
      const auto cfg = b.build();
      const auto rows = demux::cmd_sweep(b);
      if (c.format.empty() || c.format == "csv") {
        emit(demux::sweep_csv(cfg, rows), c.out);
      } else {
        require_format(c.format, {"json"}, "sweep");
        emit(demux::sweep_json(cfg, rows).dump(2) + "\n", c.out);
      }
    } else if (geo->parsed()) {
      if (!c.format.empty()) require_format(c.format, {"json"}, "geometry");
      emit(demux::cmd_geometry(builder_from(c).build()).dump(2) + "\n", c.out);
    }
  } catch (const demux::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return static_cast<int>(Exit::config);
  } catch (const demux::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return static_cast<int>(Exit::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(Exit::internal);
  }
  return static_cast<int>(Exit::ok);
}
