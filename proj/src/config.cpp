#include "demux/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

namespace demux {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  if (d != std::floor(d) || std::fabs(d) > 9.0e15) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<std::int64_t>(d);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

struct Field {
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
  bool numeric = true;
};

template <typename Ref>
Field real(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); },
          [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); }};
}

template <typename Ref>
Field integer(Ref ref) {
  return {[ref](RunConfig& c, const std::string& k, const std::string& v) {
            auto& dst = ref(c);
            const auto x = parse_int(k, v);
            using T = std::remove_reference_t<decltype(dst)>;
            if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
              throw ConfigError(k + ": value out of range");
            }
            dst = static_cast<T>(x);
          },
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["run.n_pulses"] = integer([](RunConfig& c) -> std::int64_t& { return c.n_pulses; });
    f["run.seed"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                       std::uint64_t s = 0;
                       auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
                       if (ec != std::errc{} || ptr != v.data() + v.size()) {
                         throw ConfigError(k + ": expected a non-negative integer, got '" + v + "'");
                       }
                       c.seed = s;
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};
    f["run.output_dir"] = {[](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = unquote(v); },
                           [](const RunConfig& c) { return "\"" + c.output_dir + "\""; }, false};
    f["run.tag_format"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                             const auto s = unquote(v);
                             if (s == "csv") {
                               c.tag_format = TagFormat::csv;
                             } else if (s == "binary") {
                               c.tag_format = TagFormat::binary;
                             } else {
                               throw ConfigError(k + ": expected csv or binary, got '" + s + "'");
                             }
                           },
                           [](const RunConfig& c) {
                             return std::string(c.tag_format == TagFormat::csv ? "csv" : "binary");
                           },
                           false};
    f["run.benches"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                          if (v == "true") {
                            c.benches = true;
                          } else if (v == "false") {
                            c.benches = false;
                          } else {
                            throw ConfigError(k + ": expected true or false, got '" + v + "'");
                          }
                        },
                        [](const RunConfig& c) { return std::string(c.benches ? "true" : "false"); }, false};

    f["emitter.rep_rate_hz"] = real([](RunConfig& c) -> double& { return c.emitter.rep_rate_hz; });
    f["emitter.p_det"] = real([](RunConfig& c) -> double& { return c.emitter.p_det; });
    f["emitter.g2_target"] = real([](RunConfig& c) -> double& { return c.emitter.g2_target; });
    f["emitter.indist"] = real([](RunConfig& c) -> double& { return c.emitter.indist; });
    f["emitter.lifetime_ps"] = real([](RunConfig& c) -> double& { return c.emitter.lifetime_ps; });
    f["emitter.rabi_damping"] = real([](RunConfig& c) -> double& { return c.emitter.rabi_damping; });

    f["demux.n_outputs"] = integer([](RunConfig& c) -> int& { return c.demux.n_outputs; });
    f["demux.loop_delay_ns"] = real([](RunConfig& c) -> double& { return c.demux.loop_delay_ns; });
    f["demux.pbs_leak"] = real([](RunConfig& c) -> double& { return c.demux.pbs_leak; });
    f["demux.loop_transmission"] = real([](RunConfig& c) -> double& { return c.demux.loop_transmission; });
    f["demux.fixed_transmission"] = real([](RunConfig& c) -> double& { return c.demux.fixed_transmission; });
    f["demux.detector_eff"] = real([](RunConfig& c) -> double& { return c.demux.detector_eff; });

    f["waveform.period_ns"] = real([](RunConfig& c) -> double& { return c.waveform.period_ns; });
    f["waveform.on_duration_ns"] = real([](RunConfig& c) -> double& { return c.waveform.on_duration_ns; });
    f["waveform.rise_ns"] = real([](RunConfig& c) -> double& { return c.waveform.rise_ns; });
    f["waveform.fall_ns"] = real([](RunConfig& c) -> double& { return c.waveform.fall_ns; });
    f["waveform.p_sw_max"] = real([](RunConfig& c) -> double& { return c.waveform.p_sw_max; });
    f["waveform.phase_ns"] = real([](RunConfig& c) -> double& { return c.waveform.phase_ns; });

    f["geometry.wavelength_nm"] = real([](RunConfig& c) -> double& { return c.geometry.wavelength_nm; });
    f["geometry.waist_mm"] = real([](RunConfig& c) -> double& { return c.geometry.waist_mm; });
    f["geometry.loop_delay_ns"] = real([](RunConfig& c) -> double& { return c.geometry.loop_delay_ns; });
    f["geometry.aperture_mm"] = real([](RunConfig& c) -> double& { return c.geometry.aperture_mm; });
    f["geometry.spacing_factor"] = real([](RunConfig& c) -> double& { return c.geometry.spacing_factor; });

    f["chain.eta_first"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                              c.chain.eta_first = parse_double(k, v);
                            },
                            [](const RunConfig& c) { return format_double(c.chain.eta_first.value_or(0)); }};
    f["chain.eta_last"] = {[](RunConfig& c, const std::string& k, const std::string& v) {
                             c.chain.eta_last = parse_double(k, v);
                           },
                           [](const RunConfig& c) { return format_double(c.chain.eta_last.value_or(0)); }};

    f["analysis.window_ps"] = integer([](RunConfig& c) -> std::int64_t& { return c.analysis.window_ps; });
    f["analysis.side_peaks"] = integer([](RunConfig& c) -> int& { return c.analysis.side_peaks; });
    f["analysis.g2_exclusion"] = integer([](RunConfig& c) -> int& { return c.analysis.g2_exclusion; });
    f["analysis.hom_exclusion"] = integer([](RunConfig& c) -> int& { return c.analysis.hom_exclusion; });
    f["analysis.corr_bin_ps"] = integer([](RunConfig& c) -> std::int64_t& { return c.analysis.corr_bin_ps; });
    f["analysis.trace_bin_ps"] = integer([](RunConfig& c) -> std::int64_t& { return c.analysis.trace_bin_ps; });

    f["predict.n"] = integer([](RunConfig& c) -> int& { return c.predict_n; });
    f["sweep.objective"] = {[](RunConfig& c, const std::string&, const std::string& v) {
                              c.sweep.objective = unquote(v);
                            },
                            [](const RunConfig& c) { return c.sweep.objective; }, false};
    f["sweep.n"] = integer([](RunConfig& c) -> int& { return c.sweep.n; });
    return f;
  }();
  return table;
}

constexpr std::string_view kGridPrefix = "sweep.grid.";

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError(key + ": expected a list like [a, b, c]");
  }
  std::vector<double> out;
  std::stringstream ss(v.substr(1, v.size() - 2));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = trim(item);
    if (t.empty()) throw ConfigError(key + ": empty list element");
    out.push_back(parse_double(key, t));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace

ConfigBuilder::ConfigBuilder() = default;

void ConfigBuilder::assign(const std::string& key, const std::string& value, const std::string& where) {
  try {
    if (key.starts_with(kGridPrefix)) {
      const std::string target = key.substr(kGridPrefix.size());
      const auto it = fields().find(target);
      if (it == fields().end() || !it->second.numeric || target.starts_with("sweep.") || target.starts_with("run.")) {
        throw ConfigError(key + ": '" + target + "' is not a sweepable numeric key");
      }
      auto values = parse_list(key, value);
      for (auto& axis : cfg_.sweep.grid) {
        if (axis.key == target) {
          axis.values = std::move(values);
          where_[key] = where;
          return;
        }
      }
      cfg_.sweep.grid.push_back({target, std::move(values)});
      where_[key] = where;
      return;
    }
    const auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown key '" + key + "'");
    it->second.set(cfg_, key, value);
    where_[key] = where;
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void ConfigBuilder::parse_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    bool quoted = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    const std::string body = trim(std::string_view(line).substr(0, cut));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + ": expected 'key = value'");
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " + std::to_string(it->second) + ")");
    }
    assign(key, value, where);
  }
}

void ConfigBuilder::parse_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  parse_text(text, path.string());
}

void ConfigBuilder::set(const std::string& assignment, const std::string& origin) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(origin + ": expected key=value, got '" + assignment + "'");
  set(trim(std::string_view(assignment).substr(0, eq)), trim(std::string_view(assignment).substr(eq + 1)), origin);
}

void ConfigBuilder::set(const std::string& key, const std::string& value, const std::string& origin) {
  assign(key, value, origin);
}

RunConfig ConfigBuilder::build() const {
  RunConfig c = cfg_;
  if (!where_.contains("waveform.fall_ns")) c.waveform.fall_ns = c.waveform.rise_ns;

  auto located = [&](const std::string& message) {
    // prefix the location of the longest key the message starts with
    std::string best;
    for (const auto& [key, _] : fields()) {
      if (message.starts_with(key) && key.size() > best.size()) best = key;
    }
    const auto it = where_.find(best);
    return ConfigError((it != where_.end() ? it->second : std::string("config")) + ": " + message);
  };

  try {
    if (c.chain.eta_first.has_value() != c.chain.eta_last.has_value()) {
      throw ConfigError(std::string(c.chain.eta_first ? "chain.eta_last" : "chain.eta_first") +
                        " is required when the other chain endpoint is set");
    }
    if (c.chain.eta_first) {
      for (const char* k : {"demux.loop_transmission", "demux.fixed_transmission"}) {
        if (where_.contains(k)) throw ConfigError(std::string(k) + " conflicts with chain.eta_first/eta_last");
      }
      try {
        const auto chain = fit_chain(*c.chain.eta_first, *c.chain.eta_last, c.demux.n_outputs);
        c.demux = demux_from_chain(chain, c.demux, c.waveform);
      } catch (const ConfigError& e) {
        const std::string msg = e.what();
        throw ConfigError(msg.starts_with("demux.") ? msg : "chain.eta_first: " + msg);
      }
    }
    c.validate();
  } catch (const ConfigError& e) {
    throw located(e.what());
  }
  return c;
}

void RunConfig::validate() const {
  emitter.validate();
  demux.validate(waveform);
  geometry.validate();
  if (n_pulses < 0) throw ConfigError("run.n_pulses must be >= 0");
  if (demux.loop_delay_ps() != pulse_period_ps()) {
    throw ConfigError("demux.loop_delay_ns must equal the emitter pulse separation (" +
                      std::to_string(pulse_period_ps()) + " ps)");
  }
  if (analysis.window_ps < 1) throw ConfigError("analysis.window_ps must be >= 1");
  if (analysis.side_peaks < 1) throw ConfigError("analysis.side_peaks must be >= 1");
  if (analysis.g2_exclusion < 0) throw ConfigError("analysis.g2_exclusion must be >= 0");
  if (analysis.hom_exclusion < 0) throw ConfigError("analysis.hom_exclusion must be >= 0");
  if (analysis.corr_bin_ps < 1) throw ConfigError("analysis.corr_bin_ps must be >= 1");
  if (analysis.trace_bin_ps < 1) throw ConfigError("analysis.trace_bin_ps must be >= 1");
  if (analysis.window_ps > demux.loop_delay_ps()) throw ConfigError("analysis.window_ps exceeds the pulse separation");
  if (predict_n < 0 || predict_n > demux.n_outputs) throw ConfigError("predict.n must be in 0..demux.n_outputs");
  if (sweep.objective != "R_n" && sweep.objective != "max_outputs") {
    throw ConfigError("sweep.objective must be R_n or max_outputs");
  }
  if (sweep.n < 1 || sweep.n > demux.n_outputs) throw ConfigError("sweep.n must be in 1..demux.n_outputs");
}

CycleLayout RunConfig::layout() const {
  return {waveform.period_ps(), demux.loop_delay_ps(), demux.n_outputs, analysis.window_ps};
}

std::vector<std::uint32_t> RunConfig::bin_map() const {
  std::vector<std::uint32_t> m;
  for (int k = 1; k <= demux.n_outputs; ++k) m.push_back(bin_to_channel(k, demux));
  return m;
}

RunConfig load_config(const std::filesystem::path& path) {
  ConfigBuilder b;
  b.parse_file(path);
  return b.build();
}

RunConfig apply_point(const ConfigBuilder& base, const std::vector<SweepAxis>& grid, std::span<const double> point) {
  ConfigBuilder b = base;
  for (std::size_t i = 0; i < grid.size(); ++i) b.set(grid[i].key, format_double(point[i]), "sweep point");
  return b.build();
}

std::string canonical_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    if (key.starts_with("chain.")) {
      const auto& v = key == "chain.eta_first" ? cfg.chain.eta_first : cfg.chain.eta_last;
      if (!v) continue;
    }
    // derived from the chain endpoints when those are present
    if (cfg.chain.eta_first && (key == "demux.loop_transmission" || key == "demux.fixed_transmission")) continue;
    out += key + " = " + field.get(cfg) + "\n";
  }
  for (const auto& axis : cfg.sweep.grid) {
    out += std::string(kGridPrefix) + axis.key + " = [";
    for (std::size_t i = 0; i < axis.values.size(); ++i) {
      out += (i ? ", " : "") + format_double(axis.values[i]);
    }
    out += "]\n";
  }
  return out;
}

std::string hash_hex(std::string_view data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace demux
