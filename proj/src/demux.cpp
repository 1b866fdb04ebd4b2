#include "demux/demux.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "detail/blocks.hpp"

namespace demux {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool is_prob(double p) {
  return p >= 0.0 && p <= 1.0;
}

struct PhotonOutcome {
  std::int64_t bin = 0;
  std::uint64_t entry_ps = 0;
  std::uint64_t exit_ps = 0;
  std::uint32_t channel = 0;
  Fate fate = Fate::exited;
  bool switched = false;
};

// Sampling twin of exit_distribution(); the two must follow the same steps.
PhotonOutcome propagate(std::int64_t bin, double offset_ps, const DemuxParams& dp, const EomWaveform& w,
                        RandomStream& rng) {
  const std::int64_t loop = dp.loop_delay_ps();
  const std::int64_t entry = bin * loop;
  PhotonOutcome out;
  out.bin = bin;
  out.entry_ps = static_cast<std::uint64_t>(entry + std::llround(offset_ps));

  for (int m = 0; m < dp.n_outputs; ++m) {
    if (m >= 1 && !rng.bernoulli(dp.loop_transmission)) {
      out.fate = Fate::lost_loop;
      return out;
    }
    const double p = w.at_ps(entry + m * loop);
    bool exits = false;
    if (rng.uniform() < p) {
      exits = true;
      out.switched = true;
    } else if (rng.bernoulli(dp.pbs_leak)) {
      exits = true;
    }
    if (exits) {
      if (!rng.bernoulli(dp.fixed_transmission)) {
        out.fate = Fate::lost_coupling;
      } else if (!rng.bernoulli(dp.detector_eff)) {
        out.fate = Fate::lost_detector;
      } else {
        out.fate = Fate::exited;
        out.channel = static_cast<std::uint32_t>(m + 1);
        out.exit_ps = out.entry_ps + static_cast<std::uint64_t>(m * loop);
      }
      return out;
    }
  }
  out.fate = Fate::lost_overflow;
  return out;
}

}  // namespace

void EomWaveform::validate() const {
  require(period_ns > 0, "waveform.period_ns must be > 0");
  require(on_duration_ns > 0, "waveform.on_duration_ns must be > 0");
  require(rise_ns >= 0, "waveform.rise_ns must be >= 0");
  require(fall_ns >= 0, "waveform.fall_ns must be >= 0");
  require(rise_ns + on_duration_ns + fall_ns < period_ns,
          "waveform: rise_ns + on_duration_ns + fall_ns must be < period_ns");
  require(is_prob(p_sw_max), "waveform.p_sw_max must be in [0, 1]");
  require(std::isfinite(phase_ns), "waveform.phase_ns must be finite");
}

double EomWaveform::at_ps(std::int64_t t_ps) const {
  const std::int64_t period = period_ps();
  const std::int64_t rise = ns_to_ps(rise_ns);
  const std::int64_t on = ns_to_ps(on_duration_ns);
  const std::int64_t fall = ns_to_ps(fall_ns);
  std::int64_t u = (t_ps - (ns_to_ps(phase_ns) - rise)) % period;
  if (u < 0) u += period;
  if (u < rise) return p_sw_max * static_cast<double>(u) / static_cast<double>(rise);
  u -= rise;
  if (u < on) return p_sw_max;
  u -= on;
  if (u < fall) return p_sw_max * (1.0 - static_cast<double>(u) / static_cast<double>(fall));
  return 0.0;
}

double eom_switch_prob(double t_ns, const EomWaveform& w) {
  double u = std::fmod(t_ns - (w.phase_ns - w.rise_ns), w.period_ns);
  if (u < 0) u += w.period_ns;
  if (u < w.rise_ns) return w.p_sw_max * u / w.rise_ns;
  u -= w.rise_ns;
  if (u < w.on_duration_ns) return w.p_sw_max;
  u -= w.on_duration_ns;
  if (u < w.fall_ns) return w.p_sw_max * (1.0 - u / w.fall_ns);
  return 0.0;
}

void DemuxParams::validate(const EomWaveform& w) const {
  w.validate();
  require(n_outputs >= 1, "demux.n_outputs must be >= 1");
  require(loop_delay_ns > 0 && loop_delay_ps() > 0, "demux.loop_delay_ns must be > 0");
  require(is_prob(pbs_leak), "demux.pbs_leak must be in [0, 1]");
  require(is_prob(loop_transmission), "demux.loop_transmission must be in [0, 1]");
  require(is_prob(fixed_transmission), "demux.fixed_transmission must be in [0, 1]");
  require(is_prob(detector_eff), "demux.detector_eff must be in [0, 1]");

  const std::int64_t loop = loop_delay_ps();
  require(w.period_ps() % loop == 0, "waveform.period_ns must be a multiple of demux.loop_delay_ns");
  require(n_outputs * loop <= w.period_ps(), "demux.n_outputs: loading window exceeds the EOM period");
  for (int k = 0; k + 1 < n_outputs; ++k) {
    require(w.at_ps(k * loop) == 0.0,
            "waveform.phase_ns: EOM switches during loading bin " + std::to_string(k + 1) +
                " (plateau starts before the last loading bin enters)");
  }
  require(w.at_ps(release_offset_ps()) == w.p_sw_max, "waveform.phase_ns: plateau does not cover the release bin");
}

std::uint32_t bin_to_channel(int k, const DemuxParams& dp) {
  if (k < 1 || k > dp.n_outputs) {
    throw std::out_of_range("entry bin " + std::to_string(k) + " outside 1.." + std::to_string(dp.n_outputs));
  }
  return static_cast<std::uint32_t>(dp.n_outputs + 1 - k);
}

double ExitDistribution::exit_total() const {
  double s = 0.0;
  for (const auto& e : exits) s += e.prob;
  return s;
}

double ExitDistribution::total() const {
  return exit_total() + lost_loop + lost_coupling + lost_detector + lost_overflow;
}

double ExitDistribution::prob(std::uint32_t channel, int loops) const {
  double s = 0.0;
  for (const auto& e : exits) {
    if (e.channel == channel && e.loops == loops) s += e.prob;
  }
  return s;
}

ExitDistribution exit_distribution(std::int64_t entry_ps, const DemuxParams& dp, const EomWaveform& w) {
  ExitDistribution d;
  const std::int64_t loop = dp.loop_delay_ps();
  double alive = 1.0;
  auto book_exit = [&](double x, int m, bool switched) {
    d.lost_coupling += x * (1.0 - dp.fixed_transmission);
    d.lost_detector += x * dp.fixed_transmission * (1.0 - dp.detector_eff);
    d.exits.push_back({static_cast<std::uint32_t>(m + 1), m, switched, x * dp.fixed_transmission * dp.detector_eff});
  };
  for (int m = 0; m < dp.n_outputs; ++m) {
    if (m >= 1) {
      d.lost_loop += alive * (1.0 - dp.loop_transmission);
      alive *= dp.loop_transmission;
    }
    const double p = w.at_ps(entry_ps + m * loop);
    book_exit(alive * p, m, true);
    book_exit(alive * (1.0 - p) * dp.pbs_leak, m, false);
    alive *= (1.0 - p) * (1.0 - dp.pbs_leak);
  }
  d.lost_overflow = alive;
  return d;
}

std::vector<double> analytic_channel_efficiency(const DemuxParams& dp, const EomWaveform& w) {
  std::vector<double> eta(static_cast<std::size_t>(dp.n_outputs));
  for (int k = 1; k <= dp.n_outputs; ++k) {
    const auto ch = bin_to_channel(k, dp);
    const auto d = exit_distribution((k - 1) * dp.loop_delay_ps(), dp, w);
    eta[ch - 1] = d.prob(ch, static_cast<int>(ch) - 1);
  }
  return eta;
}

std::int64_t LossLedger::exited() const {
  std::int64_t s = 0;
  for (auto c : exited_by_channel) s += c;
  return s;
}

std::int64_t LossLedger::lost() const {
  return lost_loop + lost_coupling + lost_detector + lost_overflow;
}

void LossLedger::add(const LossLedger& o) {
  entered += o.entered;
  if (exited_by_channel.size() < o.exited_by_channel.size()) exited_by_channel.resize(o.exited_by_channel.size());
  for (std::size_t i = 0; i < o.exited_by_channel.size(); ++i) exited_by_channel[i] += o.exited_by_channel[i];
  switched += o.switched;
  leaked += o.leaked;
  lost_loop += o.lost_loop;
  lost_coupling += o.lost_coupling;
  lost_detector += o.lost_detector;
  lost_overflow += o.lost_overflow;
}

RouteResult route(const Emission& emission, const DemuxParams& dp, const EomWaveform& w, const RandomStream& rng,
                  Exec exec, RouteOptions options) {
  dp.validate(w);
  if (!emission.events.empty() && emission.pulse_period_ps != dp.loop_delay_ps()) {
    throw ConfigError("demux.loop_delay_ns must equal the source pulse separation (" +
                      std::to_string(emission.pulse_period_ps) + " ps)");
  }
  const auto& events = emission.events;
  const auto outcomes = detail::gather_blocks<PhotonOutcome>(
      static_cast<std::int64_t>(events.size()), exec,
      [&](std::int64_t begin, std::int64_t end, std::vector<PhotonOutcome>& out) {
        for (std::int64_t i = begin; i < end; ++i) {
          const auto& ev = events[static_cast<std::size_t>(i)];
          for (int j = 0; j < ev.n_photons; ++j) {
            RandomStream r = rng.child(2 * static_cast<std::uint64_t>(ev.bin_index) + static_cast<std::uint64_t>(j));
            out.push_back(propagate(ev.bin_index, ev.photons[j].offset_ps, dp, w, r));
          }
        }
      });

  RouteResult res;
  const auto n_out = static_cast<std::size_t>(dp.n_outputs);
  res.outputs.resize(n_out);
  res.ledger.exited_by_channel.assign(n_out, 0);
  res.monitor.reserve(outcomes.size());

  const std::int64_t period = w.period_ps();
  const std::int64_t loop = dp.loop_delay_ps();
  if (options.per_cycle_ledger) {
    const std::int64_t n_cycles = (emission.n_pulses * loop + period - 1) / period;
    res.cycles.assign(static_cast<std::size_t>(n_cycles), LossLedger{0, std::vector<std::int64_t>(n_out, 0)});
  }

  for (const auto& o : outcomes) {
    res.monitor.push_back({kMonitorChannel, o.entry_ps});
    LossLedger* ledgers[2] = {&res.ledger, nullptr};
    if (options.per_cycle_ledger) ledgers[1] = &res.cycles[static_cast<std::size_t>(o.bin * loop / period)];
    for (LossLedger* l : ledgers) {
      if (l == nullptr) continue;
      ++l->entered;
      switch (o.fate) {
        case Fate::exited:
          ++l->exited_by_channel[o.channel - 1];
          ++(o.switched ? l->switched : l->leaked);
          break;
        case Fate::lost_loop: ++l->lost_loop; break;
        case Fate::lost_coupling: ++l->lost_coupling; break;
        case Fate::lost_detector: ++l->lost_detector; break;
        case Fate::lost_overflow: ++l->lost_overflow; break;
      }
    }
    if (o.fate == Fate::exited) res.outputs[o.channel - 1].push_back({o.channel, o.exit_ps});
  }
  res.monitor = sort_and_merge(std::move(res.monitor));
  for (auto& ch : res.outputs) ch = sort_and_merge(std::move(ch));
  return res;
}

}  // namespace demux
