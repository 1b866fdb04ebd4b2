// Serial reference versus OpenMP path for the Monte Carlo and correlation
// kernels. Arg(0) runs the serial path, Arg(1) the parallel one.

#include <benchmark/benchmark.h>

#include "demux/demux.hpp"
#include "demux/source.hpp"
#include "demux/tagproc.hpp"

using namespace demux;

namespace {

constexpr std::int64_t kPulses = 2'000'000;

Exec exec_of(const benchmark::State& state) {
  return state.range(0) == 0 ? Exec::serial : Exec::parallel;
}

EmitterParams emitter() {
  EmitterParams e;
  e.rep_rate_hz = 160e6;
  return e;
}

const Emission& emission() {
  static const Emission em = sample_emission(emitter(), kPulses, make_stream(1, 0));
  return em;
}

const BenchStreams& hbt_streams() {
  static const BenchStreams s = hbt_bench(emission(), make_stream(1, 1));
  return s;
}

void BM_SampleEmission(benchmark::State& state) {
  for (auto _ : state) {
    auto em = sample_emission(emitter(), kPulses, make_stream(2, 0), exec_of(state));
    benchmark::DoNotOptimize(em.events.data());
  }
  state.SetItemsProcessed(state.iterations() * kPulses);
}

void BM_Route(benchmark::State& state) {
  DemuxParams dp;
  dp.pbs_leak = 0.12;
  dp.loop_transmission = 0.9;
  dp.fixed_transmission = 0.76;
  EomWaveform w;
  w.p_sw_max = 0.95;
  const auto& em = emission();
  for (auto _ : state) {
    auto r = route(em, dp, w, make_stream(3, 0), exec_of(state));
    benchmark::DoNotOptimize(r.monitor.data());
  }
  state.SetItemsProcessed(state.iterations() * em.photon_count());
}

void BM_HbtBench(benchmark::State& state) {
  const auto& em = emission();
  for (auto _ : state) {
    auto s = hbt_bench(em, make_stream(4, 0), exec_of(state));
    benchmark::DoNotOptimize(s.a.data());
  }
  state.SetItemsProcessed(state.iterations() * em.photon_count());
}

void BM_Correlate(benchmark::State& state) {
  const auto& s = hbt_streams();
  const PeakBaseline base;
  const auto range = correlation_range_ps(emission().pulse_period_ps, base);
  for (auto _ : state) {
    auto h = correlate(s.a, s.b, range, 50, exec_of(state));
    benchmark::DoNotOptimize(h.counts.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.a.size()));
}

}  // namespace

BENCHMARK(BM_SampleEmission)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Route)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_HbtBench)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Correlate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
