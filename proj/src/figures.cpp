#include "nslab/figures.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "nslab/attacker.hpp"
#include "nslab/lab.hpp"
#include "nslab/stats.hpp"
#include "nslab/uarch.hpp"

namespace nslab::figures {

namespace {

using wire::Opcode;

std::ofstream open_csv(const FigureOptions& o, const std::string& name, std::vector<std::string>& written) {
  std::ofstream f(o.out / name, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + (o.out / name).string());
  written.push_back(name);
  return f;
}

void write_hist(const FigureOptions& o, const std::string& name, const std::vector<double>& xs,
                std::vector<std::string>& written) {
  const stats::HistogramSpec spec;
  const auto h = stats::histogram(xs, spec);
  const auto s = stats::smooth(h.counts, spec.smoothing_window);
  auto f = open_csv(o, name, written);
  stats::write_histogram_csv(f, h, s);
}

victim::VictimConfig network_config(const FigureOptions& o, std::string_view default_preset) {
  victim::VictimConfig c;
  c.latency = wire::LatencyModel::from_preset(o.preset ? *o.preset : std::string(default_preset));
  return c;
}

std::uint64_t n_or(const FigureOptions& o, std::uint64_t fallback) { return o.n ? o.n : fallback; }

std::vector<double> rtts_of(const stats::MeasurementSet& m) { return m.rtts(); }

std::vector<std::string> fig3(const FigureOptions& o) {
  std::vector<std::string> written;
  lab::LoopbackLab lab(network_config(o, "local"), o.seed);
  auto& s = lab.session();
  const std::uint64_t n = n_or(o, 200'000);
  stats::MeasurementSet hit{{}, stats::Phase::hit};
  stats::MeasurementSet miss{{}, stats::Phase::miss};
  std::uint64_t seq = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    s.send(Opcode::transmit_cache);
    hit.samples.push_back({s.measure(Opcode::transmit_cache), seq++});
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    s.send(Opcode::download, 590'000);
    miss.samples.push_back({s.measure(Opcode::transmit_cache), seq++});
  }
  {
    auto f = open_csv(o, "fig3_samples.csv", written);
    const stats::MeasurementSet sets[] = {hit, miss};
    stats::write_samples_csv(f, sets);
  }
  write_hist(o, "fig3_hit_hist.csv", rtts_of(hit), written);
  write_hist(o, "fig3_miss_hist.csv", rtts_of(miss), written);
  auto f = open_csv(o, "fig3_summary.csv", written);
  f << "case,mean_ns,stddev_ns,samples\n";
  char buf[128];
  for (const auto* m : {&hit, &miss}) {
    const auto d = stats::dispersion(rtts_of(*m));
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f,%llu\n", std::string(stats::to_string(m->label)).c_str(), d.mean,
                  d.stddev, static_cast<unsigned long long>(m->samples.size()));
    f << buf;
  }
  return written;
}

std::vector<std::string> fig4(const FigureOptions& o) {
  std::vector<std::string> written;
  const std::uint64_t trials = n_or(o, 10'000);
  uarch::UarchParams params;
  uarch::Rng rng(lab::derive_seed(o.seed, 4));
  std::vector<std::uint64_t> sizes;
  for (std::uint64_t b = 0; b <= 1'000'000; b += 50'000) sizes.push_back(b);
  sizes.insert(std::upper_bound(sizes.begin(), sizes.end(), 590'000), 590'000);
  auto f = open_csv(o, "fig4_eviction.csv", written);
  f << "bytes,model_probability,empirical_frequency,trials\n";
  char buf[128];
  for (auto bytes : sizes) {
    std::uint64_t evicted = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
      uarch::MicroarchState st(params);
      st.cache.flag_cached = true;
      uarch::thrash(st, bytes, rng);
      evicted += !st.cache.flag_cached;
    }
    const double model = uarch::eviction_probability(static_cast<double>(bytes), params.eviction_lambda_bytes);
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%llu\n", static_cast<unsigned long long>(bytes), model,
                  static_cast<double>(evicted) / static_cast<double>(trials), static_cast<unsigned long long>(trials));
    f << buf;
  }
  return written;
}

std::vector<std::string> fig5(const FigureOptions& o) {
  std::vector<std::string> written;
  const std::uint64_t n = n_or(o, 10'000);
  uarch::MicroarchState st;
  std::vector<std::uint64_t> warm, cold;
  for (std::uint64_t i = 0; i < n; ++i) {
    st.clock.advance(2'000'000);
    cold.push_back(uarch::transmit_gadget_avx(st));
    st.clock.advance(1'000);
    warm.push_back(uarch::transmit_gadget_avx(st));
  }
  {
    auto f = open_csv(o, "fig5_samples.csv", written);
    f << "sequence,cycles,state\n";
    for (std::uint64_t i = 0; i < n; ++i) f << 2 * i << ',' << cold[i] << ",powered_down\n";
    for (std::uint64_t i = 0; i < n; ++i) f << 2 * i + 1 << ',' << warm[i] << ",active\n";
  }
  auto f = open_csv(o, "fig5_summary.csv", written);
  f << "state,mean_cycles,mean_ns\n";
  char buf[128];
  const auto emit = [&](const char* name, const std::vector<std::uint64_t>& xs) {
    double sum = 0;
    for (auto x : xs) sum += static_cast<double>(x);
    const double mean = sum / static_cast<double>(xs.size());
    std::snprintf(buf, sizeof buf, "%s,%.3f,%.3f\n", name, mean, mean * st.cycle_time_ns);
    f << buf;
  };
  emit("active", warm);
  emit("powered_down", cold);
  return written;
}

std::vector<std::string> fig6(const FigureOptions& o) {
  std::vector<std::string> written;
  auto f = open_csv(o, "fig6_powerdown.csv", written);
  f << "idle_ns,cycles,penalty_cycles\n";
  const std::uint64_t step = n_or(o, 10'000);
  for (std::uint64_t idle = 0; idle <= 1'500'000; idle += step) {
    uarch::MicroarchState st;
    uarch::transmit_gadget_avx(st);
    st.clock.advance(static_cast<std::int64_t>(idle));
    const auto c = uarch::transmit_gadget_avx(st);
    f << idle << ',' << c << ',' << c - st.avx.warm_cycles << '\n';
  }
  return written;
}

// Leaks `indices` with the histogram-mode rule and writes one histogram per bit.
std::vector<std::string> bit_histograms(const FigureOptions& o, const std::string& prefix,
                                        victim::VictimConfig cfg, const std::vector<std::uint64_t>& indices,
                                        std::uint64_t default_n) {
  std::vector<std::string> written;
  lab::LoopbackLab lab(cfg, o.seed);
  attacker::ExtractionPlan plan;
  plan.measurements_per_bit = n_or(o, default_n);
  plan.classifier = attacker::Classifier::mode;
  plan.keep_samples = true;
  plan.first_bit = cfg.secrets.secret_offset();
  plan.in_bounds_length = cfg.array_length();
  // Corner cases without calibrate()'s resolvability check.
  std::vector<double> hit, miss;
  for (std::uint64_t i = 0; i < plan.calibration_count(); ++i) {
    lab.session().send(Opcode::transmit_cache);
    hit.push_back(lab.session().measure(Opcode::transmit_cache));
    lab.session().send(Opcode::download, plan.reset_bytes);
    miss.push_back(lab.session().measure(Opcode::transmit_cache));
  }
  const auto calib = stats::calibrate_from(hit, miss);
  auto summary_rows = std::vector<std::string>{};
  char buf[256];
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto r = attacker::leak_bit(lab.session(), plan, calib, indices[k]);
    write_hist(o, prefix + "_bit" + std::to_string(k) + "_hist.csv", r.samples, written);
    std::snprintf(buf, sizeof buf, "%zu,%llu,%d,%d,%.3f,%.3f,%.3f,%.6f\n", k,
                  static_cast<unsigned long long>(indices[k]), cfg.secrets.bit(indices[k]) ? 1 : 0, r.bit, r.mode_ns,
                  r.mean_ns, calib.threshold, r.confidence);
    summary_rows.emplace_back(buf);
  }
  auto f = open_csv(o, prefix + "_summary.csv", written);
  f << "position,bit_index,planted,decided,mode_ns,mean_ns,threshold_ns,confidence\n";
  for (const auto& row : summary_rows) f << row;
  return written;
}

std::vector<std::string> fig7(const FigureOptions& o) {
  auto cfg = network_config(o, "none");
  const std::uint8_t d = 'd';
  cfg.secrets = uarch::SecretStore::with_secret(64, std::span(&d, 1));
  std::vector<std::uint64_t> idx;
  for (std::uint64_t i = 0; i < 8; ++i) idx.push_back(cfg.secrets.secret_offset() + i);
  return bit_histograms(o, "fig7", cfg, idx, 10'000);
}

// First two bits of the default secret 'S' (0101...) are a 0 and a 1.
std::vector<std::string> zero_one(const FigureOptions& o, const std::string& prefix, std::string_view preset) {
  auto cfg = network_config(o, preset);
  const auto base = cfg.secrets.secret_offset();
  return bit_histograms(o, prefix, cfg, {base, base + 1}, 200'000);
}

}  // namespace

const std::vector<std::string>& figure_ids() {
  static const std::vector<std::string> ids{"fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig10"};
  return ids;
}

std::vector<std::string> write_figure(std::string_view id, const FigureOptions& options) {
  std::filesystem::create_directories(options.out);
  if (id == "fig3") return fig3(options);
  if (id == "fig4") return fig4(options);
  if (id == "fig5") return fig5(options);
  if (id == "fig6") return fig6(options);
  if (id == "fig7") return fig7(options);
  if (id == "fig8") return zero_one(options, "fig8", "arm");
  if (id == "fig10") return zero_one(options, "fig10", "cloud");
  throw std::invalid_argument("unknown figure '" + std::string(id) + "'");
}

}  // namespace nslab::figures
