#include "demux/source.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "detail/blocks.hpp"

namespace demux {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string fmt(double v) {
  return std::to_string(v);
}

double draw_offset(RandomStream& rng, double lifetime_ps, double period_ps) {
  // truncated at the pulse period; the tail beyond 10 lifetimes is ~e^-10
  for (;;) {
    const double t = rng.exponential(lifetime_ps);
    if (t < period_ps) return t;
  }
}

std::uint64_t stamp(std::int64_t bin, std::int64_t period_ps, double offset_ps) {
  return static_cast<std::uint64_t>(bin * period_ps + std::llround(offset_ps));
}

}  // namespace

void EmitterParams::validate() const {
  require(std::isfinite(rep_rate_hz) && rep_rate_hz > 0, "emitter.rep_rate_hz must be > 0 (got " + fmt(rep_rate_hz) + ")");
  require(p_det >= 0 && p_det <= 1, "emitter.p_det must be in [0, 1] (got " + fmt(p_det) + ")");
  require(g2_target >= 0 && g2_target < 1, "emitter.g2_target must be in [0, 1) (got " + fmt(g2_target) + ")");
  require(indist >= 0 && indist <= 1, "emitter.indist must be in [0, 1] (got " + fmt(indist) + ")");
  require(std::isfinite(lifetime_ps) && lifetime_ps > 0, "emitter.lifetime_ps must be > 0 (got " + fmt(lifetime_ps) + ")");
  require(rabi_damping >= 0, "emitter.rabi_damping must be >= 0 (got " + fmt(rabi_damping) + ")");
  require(static_cast<double>(pulse_period_ps()) > 10.0 * lifetime_ps,
          "emitter.lifetime_ps: pulse separation " + std::to_string(pulse_period_ps()) +
              " ps must exceed 10 lifetimes");
  require(two_photon_prob() <= p_det / 10.0,
          "emitter.g2_target too large: two-photon probability exceeds p_det/10");
}

std::int64_t EmitterParams::pulse_period_ps() const {
  return std::llround(1e12 / rep_rate_hz);
}

double EmitterParams::common_label_prob() const {
  return std::sqrt(indist);
}

double rabi_rate(double pulse_area, const EmitterParams& params) {
  if (!(pulse_area >= 0)) throw ConfigError("pulse area must be >= 0 (got " + fmt(pulse_area) + ")");
  const double s = std::sin(pulse_area * std::numbers::pi / 2.0);
  return params.p_det * params.rep_rate_hz * s * s * std::exp(-params.rabi_damping * pulse_area);
}

std::int64_t Emission::photon_count() const {
  std::int64_t n = 0;
  for (const auto& e : events) n += e.n_photons;
  return n;
}

Emission sample_emission(const EmitterParams& params, std::int64_t n_pulses, const RandomStream& rng, Exec exec) {
  params.validate();
  if (n_pulses < 0) throw ConfigError("n_pulses must be >= 0");

  const double p2 = params.two_photon_prob();
  const double p1 = params.one_photon_prob();
  const double q_common = params.common_label_prob();
  const std::int64_t period = params.pulse_period_ps();
  const double period_d = static_cast<double>(period);

  Emission out;
  out.n_pulses = n_pulses;
  out.pulse_period_ps = period;
  out.events = detail::gather_blocks<PhotonEvent>(
      n_pulses, exec, [&](std::int64_t begin, std::int64_t end, std::vector<PhotonEvent>& events) {
        for (std::int64_t b = begin; b < end; ++b) {
          RandomStream r = rng.child(static_cast<std::uint64_t>(b));
          const double u = r.uniform();
          const int n = u < p2 ? 2 : (u < p2 + p1 ? 1 : 0);
          if (n == 0) continue;
          PhotonEvent ev;
          ev.bin_index = b;
          ev.n_photons = n;
          for (int j = 0; j < n; ++j) {
            ev.photons[j].offset_ps = draw_offset(r, params.lifetime_ps, period_d);
            ev.photons[j].label = r.uniform() < q_common ? 0 : 1 + 2 * static_cast<std::uint64_t>(b) + j;
          }
          events.push_back(ev);
        }
      });
  return out;
}

BenchStreams hbt_bench(const Emission& emission, const RandomStream& rng, Exec exec) {
  const auto& events = emission.events;
  const std::int64_t period = emission.pulse_period_ps;
  auto tags = detail::gather_blocks<TimeTag>(
      static_cast<std::int64_t>(events.size()), exec,
      [&](std::int64_t begin, std::int64_t end, std::vector<TimeTag>& out) {
        for (std::int64_t i = begin; i < end; ++i) {
          const auto& ev = events[static_cast<std::size_t>(i)];
          RandomStream r = rng.child(static_cast<std::uint64_t>(ev.bin_index));
          for (int j = 0; j < ev.n_photons; ++j) {
            const auto ch = r.bernoulli(0.5) ? kBenchChannelB : kBenchChannelA;
            out.push_back({ch, stamp(ev.bin_index, period, ev.photons[j].offset_ps)});
          }
        }
      });
  BenchStreams s;
  for (const auto& t : sort_and_merge(std::move(tags))) (t.channel == kBenchChannelA ? s.a : s.b).push_back(t);
  return s;
}

BenchStreams hom_bench(const Emission& emission, const RandomStream& rng, Exec exec) {
  const auto& events = emission.events;
  const std::int64_t period = emission.pulse_period_ps;
  const auto n_events = static_cast<std::int64_t>(events.size());

  // A pair is handled by the block holding its first occupied bin.
  auto tags = detail::gather_blocks<TimeTag>(n_events, exec, [&](std::int64_t begin, std::int64_t end,
                                                                 std::vector<TimeTag>& out) {
    for (std::int64_t i = begin; i < end; ++i) {
      const auto& first = events[static_cast<std::size_t>(i)];
      const std::int64_t pair = first.bin_index / 2;
      if (i > 0 && events[static_cast<std::size_t>(i - 1)].bin_index / 2 == pair) continue;

      const PhotonEvent* second = nullptr;
      if (i + 1 < n_events && events[static_cast<std::size_t>(i + 1)].bin_index / 2 == pair) {
        second = &events[static_cast<std::size_t>(i + 1)];
      }
      RandomStream r = rng.child(static_cast<std::uint64_t>(pair));
      const std::int64_t out_bin = 2 * pair + 1;

      if (second != nullptr && first.n_photons == 1 && second->n_photons == 1 &&
          first.label() == second->label()) {
        const auto ch = r.bernoulli(0.5) ? kBenchChannelB : kBenchChannelA;
        out.push_back({ch, stamp(out_bin, period, first.offset_ps())});
        out.push_back({ch, stamp(out_bin, period, second->offset_ps())});
        continue;
      }
      for (const PhotonEvent* ev : {&first, second}) {
        if (ev == nullptr) continue;
        for (int j = 0; j < ev->n_photons; ++j) {
          const auto ch = r.bernoulli(0.5) ? kBenchChannelB : kBenchChannelA;
          out.push_back({ch, stamp(out_bin, period, ev->photons[j].offset_ps)});
        }
      }
    }
  });
  BenchStreams s;
  for (const auto& t : sort_and_merge(std::move(tags))) (t.channel == kBenchChannelA ? s.a : s.b).push_back(t);
  return s;
}

}  // namespace demux
