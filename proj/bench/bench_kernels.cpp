#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "nslab/attacker.hpp"
#include "nslab/lab.hpp"
#include "nslab/stats.hpp"
#include "nslab/stats_reference.hpp"

using namespace nslab;

namespace {

std::vector<double> rtts(std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d(200'560.0, 15'600.0);
  std::vector<double> xs(n);
  for (auto& x : xs) x = d(rng);
  return xs;
}

void BM_histogram_omp(benchmark::State& st) {
  const auto xs = rtts(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(stats::histogram(xs, stats::HistogramSpec{}));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_histogram_serial(benchmark::State& st) {
  const auto xs = rtts(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(stats::reference::histogram(xs, stats::HistogramSpec{}));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_dispersion_omp(benchmark::State& st) {
  const auto xs = rtts(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(stats::dispersion(xs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_dispersion_serial(benchmark::State& st) {
  const auto xs = rtts(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(stats::reference::dispersion(xs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

victim::VictimConfig bench_victim() {
  victim::VictimConfig c;
  c.latency = wire::LatencyModel::local();
  return c;
}

double one_bit(std::size_t i) {
  lab::LoopbackLab lab(bench_victim(), lab::derive_seed(3, i));
  attacker::ExtractionPlan plan;
  plan.measurements_per_bit = 10'000;
  const stats::Calibration calib{200'520.0, 200'600.0, 200'560.0, 15'600.0, 0};
  return attacker::leak_bit(lab.session(), plan, calib, 64 + i % 8).mean_ns;
}

void BM_trials_omp(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(lab::run_trials(static_cast<std::size_t>(st.range(0)), one_bit));
}

void BM_trials_serial(benchmark::State& st) {
  for (auto _ : st) benchmark::DoNotOptimize(lab::run_trials_serial(static_cast<std::size_t>(st.range(0)), one_bit));
}

// Raw loopback request rate through the attacker session.
void BM_loopback_request(benchmark::State& st) {
  lab::LoopbackLab lab(bench_victim(), 1);
  for (auto _ : st) benchmark::DoNotOptimize(lab.session().measure(wire::Opcode::transmit_cache));
  st.SetItemsProcessed(st.iterations());
}

}  // namespace

BENCHMARK(BM_histogram_omp)->Arg(100'000)->Arg(1'000'000);
BENCHMARK(BM_histogram_serial)->Arg(100'000)->Arg(1'000'000);
BENCHMARK(BM_dispersion_omp)->Arg(100'000)->Arg(1'000'000);
BENCHMARK(BM_dispersion_serial)->Arg(100'000)->Arg(1'000'000);
BENCHMARK(BM_trials_omp)->Arg(8);
BENCHMARK(BM_trials_serial)->Arg(8);
BENCHMARK(BM_loopback_request);

BENCHMARK_MAIN();
