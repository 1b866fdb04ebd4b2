#include "demux/commands.hpp"

#include <cmath>
#include <cstdio>

#include "demux/tagproc.hpp"

namespace demux {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string two_digit(int c) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", c);
  return buf;
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_start_ps,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out += std::to_string(h.bin_start(i)) + "," + std::to_string(h.counts[i]) + "\n";
  }
  return out;
}

json rate_json(const RateSummary& r) {
  return {{"n", r.n},
          {"rate_hz", r.rate_hz},
          {"raw_counts", r.raw_counts},
          {"duration_s", r.duration_s},
          {"poisson_sigma", r.poisson_sigma}};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

std::vector<TimeTag> merged(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b) {
  const std::vector<TimeTag> parts[] = {a, b};
  return sort_and_merge(std::span<const std::vector<TimeTag>>(parts));
}

// First existing file among the two codecs, preferring the configured one.
std::optional<fs::path> find_tags(const fs::path& dir, const std::string& stem, TagFormat preferred) {
  const TagFormat other = preferred == TagFormat::csv ? TagFormat::binary : TagFormat::csv;
  for (TagFormat f : {preferred, other}) {
    fs::path p = dir / (stem + std::string(extension_for(f)));
    if (fs::exists(p)) return p;
  }
  return std::nullopt;
}

void split_bench(const std::vector<TimeTag>& tags, std::vector<TimeTag>& a, std::vector<TimeTag>& b) {
  for (const auto& t : tags) {
    if (t.channel == kBenchChannelA) {
      a.push_back(t);
    } else if (t.channel == kBenchChannelB) {
      b.push_back(t);
    } else {
      throw DataError("bench file holds unexpected channel " + std::to_string(t.channel));
    }
  }
}

}  // namespace

std::string RunLayout::monitor(TagFormat f) {
  return "monitor" + std::string(extension_for(f));
}
std::string RunLayout::channel(int c, TagFormat f) {
  return "channel_" + two_digit(c) + std::string(extension_for(f));
}
std::string RunLayout::hbt(TagFormat f) {
  return "hbt" + std::string(extension_for(f));
}
std::string RunLayout::hom(TagFormat f) {
  return "hom" + std::string(extension_for(f));
}

json ledger_json(const LossLedger& l) {
  json exited = json::object();
  for (std::size_t i = 0; i < l.exited_by_channel.size(); ++i) {
    exited[two_digit(static_cast<int>(i) + 1)] = l.exited_by_channel[i];
  }
  return {{"entered", l.entered},
          {"exited_by_channel", exited},
          {"exited_by_mechanism", {{"switched", l.switched}, {"leaked", l.leaked}}},
          {"lost_by_cause",
           {{"loop_transmission", l.lost_loop},
            {"fixed_transmission", l.lost_coupling},
            {"detector", l.lost_detector},
            {"overflow", l.lost_overflow}}},
          {"conserved", l.conserved()}};
}

SimulateResult cmd_simulate(const RunConfig& cfg) {
  cfg.validate();
  SimulateResult res;
  res.dir = cfg.output_dir;
  ensure_dir(res.dir);
  const TagFormat fmt = cfg.tag_format;

  const auto emission =
      sample_emission(cfg.emitter, cfg.n_pulses, make_stream(cfg.seed, substream_id(StreamDomain::emission, 0)));
  auto routed = route(emission, cfg.demux, cfg.waveform, make_stream(cfg.seed, substream_id(StreamDomain::routing, 0)));
  res.ledger = routed.ledger;
  if (!res.ledger.conserved()) throw DataError("internal: loss ledger does not balance");

  json counts = json::object();
  auto emit = [&](const std::string& name, const std::vector<TimeTag>& tags) {
    const fs::path p = res.dir / name;
    write_tags(p, tags);
    res.files.push_back(p);
    counts[name] = tags.size();
  };
  emit(RunLayout::monitor(fmt), routed.monitor);
  for (int c = 1; c <= cfg.demux.n_outputs; ++c) emit(RunLayout::channel(c, fmt), routed.outputs[c - 1]);

  if (cfg.benches) {
    const auto bench_src =
        sample_emission(cfg.emitter, cfg.n_pulses, make_stream(cfg.seed, substream_id(StreamDomain::bench_emission, 0)));
    const auto hbt = hbt_bench(bench_src, make_stream(cfg.seed, substream_id(StreamDomain::hbt, 0)));
    emit(RunLayout::hbt(fmt), merged(hbt.a, hbt.b));
    const auto hom = hom_bench(bench_src, make_stream(cfg.seed, substream_id(StreamDomain::hom, 0)));
    emit(RunLayout::hom(fmt), merged(hom.a, hom.b));
  }

  const fs::path ledger_path = res.dir / RunLayout::kLedger;
  write_file(ledger_path, ledger_json(res.ledger).dump(2) + "\n");
  res.files.push_back(ledger_path);

  const std::string text = canonical_text(cfg);
  json files = json::array();
  for (const auto& f : res.files) files.push_back(f.filename().string());
  const json manifest = {{"config", text},
                         {"config_hash", hash_hex(text)},
                         {"seed", cfg.seed},
                         {"n_pulses", cfg.n_pulses},
                         {"duration_s", cfg.duration_s()},
                         {"pulse_period_ps", cfg.pulse_period_ps()},
                         {"eom_period_ps", cfg.waveform.period_ps()},
                         {"tag_format", fmt == TagFormat::csv ? "csv" : "binary"},
                         {"counts", counts},
                         {"photons_entered", res.ledger.entered},
                         {"files", files}};
  const fs::path manifest_path = res.dir / RunLayout::kManifest;
  write_file(manifest_path, manifest.dump(2) + "\n");
  res.files.push_back(manifest_path);
  return res;
}

ConfigBuilder manifest_config(const fs::path& run_dir) {
  ConfigBuilder b;
  const fs::path p = run_dir / RunLayout::kManifest;
  if (!fs::exists(p)) return b;
  json m;
  try {
    m = json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  if (!m.contains("config") || !m["config"].is_string()) throw DataError(p.string() + ": missing config text");
  b.parse_text(m["config"].get<std::string>(), p.string());
  return b;
}

RunData load_run(const fs::path& dir, const RunConfig& cfg) {
  if (!fs::is_directory(dir)) throw DataError("run directory " + dir.string() + " does not exist");
  RunData d;
  const TagFormat fmt = cfg.tag_format;
  if (auto p = find_tags(dir, "monitor", fmt)) {
    d.has_demux = true;
    d.monitor = read_tags(*p);
    d.outputs.resize(static_cast<std::size_t>(cfg.demux.n_outputs));
    for (int c = 1; c <= cfg.demux.n_outputs; ++c) {
      const auto cp = find_tags(dir, "channel_" + two_digit(c), fmt);
      if (!cp) throw DataError("run directory lacks the file for channel " + std::to_string(c));
      d.outputs[c - 1] = read_tags(*cp);
    }
  }
  if (auto p = find_tags(dir, "hbt", fmt)) {
    d.has_hbt = true;
    split_bench(read_tags(*p), d.hbt_a, d.hbt_b);
  }
  if (auto p = find_tags(dir, "hom", fmt)) {
    d.has_hom = true;
    split_bench(read_tags(*p), d.hom_a, d.hom_b);
  }
  // files are written sorted; re-sort defensively for hand-made inputs
  auto by_time = [](std::vector<TimeTag>& v) {
    if (!is_sorted_by_time(v)) v = sort_and_merge(std::move(v));
  };
  by_time(d.monitor);
  for (auto& o : d.outputs) by_time(o);
  for (auto* v : {&d.hbt_a, &d.hbt_b, &d.hom_a, &d.hom_b}) by_time(*v);
  return d;
}

json analyze_run(const RunData& data, const RunConfig& cfg, const std::optional<fs::path>& plot_dir) {
  const auto& an = cfg.analysis;
  const std::int64_t pulse = cfg.pulse_period_ps();
  json report;
  json flags = json::object();
  auto plot = [&](const std::string& name, const Histogram& h) {
    if (plot_dir) write_file(*plot_dir / name, histogram_csv(h));
  };

  // g2(0)
  report["g2"] = nullptr;
  std::optional<double> g2_value;
  flags["empty_hbt"] = data.hbt_a.empty() || data.hbt_b.empty();
  if (!flags["empty_hbt"].get<bool>()) {
    const PeakBaseline base{an.window_ps, an.side_peaks, an.g2_exclusion};
    const auto corr = correlate(data.hbt_a, data.hbt_b, correlation_range_ps(pulse, base), an.corr_bin_ps);
    plot("hbt_correlation.csv", corr);
    try {
      const auto g = g2_zero(corr, pulse, base);
      g2_value = g.value;
      report["g2"] = {{"value", g.value},
                      {"sigma", g.sigma},
                      {"center_area", g.center_area},
                      {"side_mean", g.side_mean}};
    } catch (const DataError& e) {
      flags["g2_error"] = e.what();
    }
  }

  // HOM indistinguishability
  report["I"] = nullptr;
  flags["empty_hom"] = data.hom_a.empty() || data.hom_b.empty();
  if (!flags["empty_hom"].get<bool>()) {
    HomOptions opt;
    opt.baseline = {an.window_ps, an.side_peaks, an.hom_exclusion};
    const std::int64_t hom_period = 2 * pulse;
    const auto corr = correlate(data.hom_a, data.hom_b, correlation_range_ps(hom_period, opt.baseline), an.corr_bin_ps);
    plot("hom_correlation.csv", corr);
    try {
      const auto peaks = g2_zero(corr, hom_period, opt.baseline);
      opt.mean_photons =
          mean_photons_from_hom(peaks.side_mean, static_cast<std::int64_t>(data.hom_a.size() + data.hom_b.size()));
      const auto h = hom_indistinguishability(corr, g2_value.value_or(0.0), hom_period, opt);
      report["I"] = {{"value", h.value},
                     {"sigma", h.sigma},
                     {"v_raw", h.v_raw},
                     {"mean_photons", h.mean_photons},
                     {"clipped", h.clipped},
                     {"g2_used", g2_value.value_or(0.0)}};
    } catch (const DataError& e) {
      flags["hom_error"] = e.what();
    }
  }

  // demux outputs
  report["eta_ch"] = json::array();
  report["R_n"] = json::array();
  report["R_n_release"] = json::array();
  report["bin_counts"] = json::object();
  flags["empty_demux"] = !data.has_demux || data.monitor.empty();
  if (data.has_demux) {
    const auto layout = cfg.layout();
    const auto map = cfg.bin_map();
    for (const auto& e : channel_efficiency(data.outputs, data.monitor, layout, map)) {
      json j = {{"channel", e.channel},
                {"output_counts", e.output_counts},
                {"input_counts", e.input_counts},
                {"empty_reference", e.empty_reference},
                {"excursion", e.excursion}};
      j["value"] = e.empty_reference ? json(nullptr) : json(e.value);
      j["sigma"] = e.empty_reference ? json(nullptr) : json(e.sigma);
      report["eta_ch"].push_back(j);
    }
    const double duration = cfg.duration_s();
    for (const auto& r : nfold_coincidences(data.outputs, duration, an.window_ps)) report["R_n"].push_back(rate_json(r));
    std::vector<std::vector<TimeTag>> gated;
    for (const auto& o : data.outputs) gated.push_back(gate(o, layout.period_ps, layout.release_time_ps(), an.window_ps));
    for (const auto& r : nfold_coincidences(gated, duration, an.window_ps)) {
      report["R_n_release"].push_back(rate_json(r));
    }

    report["bin_counts"]["monitor"] = grid_counts(data.monitor, layout.period_ps, layout.loop_ps, an.window_ps);
    plot("trace_monitor.csv", fold(data.monitor, layout.period_ps, an.trace_bin_ps));
    for (int c = 1; c <= cfg.demux.n_outputs; ++c) {
      const auto& tags = data.outputs[static_cast<std::size_t>(c - 1)];
      report["bin_counts"]["channel_" + two_digit(c)] = grid_counts(tags, layout.period_ps, layout.loop_ps, an.window_ps);
      plot("trace_channel_" + two_digit(c) + ".csv", fold(tags, layout.period_ps, an.trace_bin_ps));
    }
  }

  report["flags"] = flags;
  report["metadata"] = {{"hom_correction", kHomCorrection},
                        {"window_ps", an.window_ps},
                        {"side_peaks", an.side_peaks},
                        {"g2_exclusion", an.g2_exclusion},
                        {"hom_exclusion", an.hom_exclusion},
                        {"corr_bin_ps", an.corr_bin_ps},
                        {"duration_s", cfg.duration_s()},
                        {"pulse_period_ps", pulse},
                        {"eom_period_ps", cfg.waveform.period_ps()},
                        {"release_time_ps", cfg.layout().release_time_ps()},
                        {"uncertainties", "Poissonian counting statistics"},
                        {"coincidence_matching", "greedy earliest-first, no tag reuse"}};
  return report;
}

json cmd_analyze(const fs::path& run_dir, const RunConfig& cfg, const fs::path& out_dir) {
  const RunData data = load_run(run_dir, cfg);
  ensure_dir(out_dir);
  json report = analyze_run(data, cfg, out_dir);
  write_file(out_dir / "report.json", report.dump(2) + "\n");
  return report;
}

ChainModel prediction_chain(const RunConfig& cfg) {
  if (cfg.chain.eta_first && cfg.chain.eta_last) {
    return fit_chain(*cfg.chain.eta_first, *cfg.chain.eta_last, cfg.demux.n_outputs);
  }
  return chain_from_demux(cfg.demux, cfg.waveform);
}

json cmd_predict(const RunConfig& cfg) {
  const ChainModel chain = prediction_chain(cfg);
  const int n_max = cfg.predict_n > 0 ? cfg.predict_n : cfg.demux.n_outputs;
  const auto etas = chain.etas(cfg.demux.n_outputs);
  json rates = json::array();
  for (int n = 1; n <= n_max; ++n) {
    const auto r = predict_rn(cfg.emitter.p_det, etas, cfg.cycle_rate_hz(), n);
    rates.push_back({{"n", n}, {"rate_hz", r.rate_hz}, {"eta", etas[static_cast<std::size_t>(n - 1)]}});
  }
  return {{"chain", {{"eta1", chain.eta1}, {"r_loop", chain.r_loop}}},
          {"p_det", cfg.emitter.p_det},
          {"f_cycle_hz", cfg.cycle_rate_hz()},
          {"etas", etas},
          {"R_n", rates}};
}

std::string predict_csv(const json& prediction) {
  std::string out = "n,eta,rate_hz\n";
  char buf[96];
  for (const auto& r : prediction["R_n"]) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", r["n"].get<int>(), r["eta"].get<double>(),
                  r["rate_hz"].get<double>());
    out += buf;
  }
  return out;
}

double sweep_objective(const RunConfig& cfg) {
  if (cfg.sweep.objective == "max_outputs") return max_outputs(cfg.geometry);
  const auto etas = prediction_chain(cfg).etas(cfg.demux.n_outputs);
  return predict_rn(cfg.emitter.p_det, etas, cfg.cycle_rate_hz(), cfg.sweep.n).rate_hz;
}

std::vector<SweepRow> cmd_sweep(const ConfigBuilder& base) {
  const RunConfig cfg = base.build();
  const auto& grid = cfg.sweep.grid;
  return sweep(grid, [&](std::span<const double> point) { return sweep_objective(apply_point(base, grid, point)); });
}

std::string sweep_csv(const RunConfig& cfg, const std::vector<SweepRow>& rows) {
  std::string out;
  for (const auto& axis : cfg.sweep.grid) out += axis.key + ",";
  out += cfg.sweep.objective + "\n";
  char buf[40];
  for (const auto& row : rows) {
    for (double v : row.point) {
      std::snprintf(buf, sizeof(buf), "%.17g,", v);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g\n", row.value);
    out += buf;
  }
  return out;
}

json sweep_json(const RunConfig& cfg, const std::vector<SweepRow>& rows) {
  json keys = json::array();
  for (const auto& axis : cfg.sweep.grid) keys.push_back(axis.key);
  json table = json::array();
  for (const auto& row : rows) table.push_back({{"point", row.point}, {"value", row.value}});
  return {{"objective", cfg.sweep.objective}, {"keys", keys}, {"rows", table}};
}

json cmd_geometry(const RunConfig& cfg) {
  const auto& g = cfg.geometry;
  return {{"max_outputs", max_outputs(g)},
          {"rayleigh_range_mm", rayleigh_range_mm(g)},
          {"effective_radius_mm", effective_radius_mm(g)},
          {"loop_path_mm", kSpeedOfLightMmPerNs * g.loop_delay_ns},
          {"spacing_factor", g.spacing_factor},
          {"aperture_mm", g.aperture_mm}};
}

}  // namespace demux
