#include "nslab/stats.hpp"

#include <omp.h>

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "stats_layout.hpp"

namespace nslab::stats {

std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::hit: return "hit";
    case Phase::miss: return "miss";
    case Phase::unknown: break;
  }
  return "unknown";
}

std::optional<Phase> parse_phase(std::string_view text) noexcept {
  if (text == "hit") return Phase::hit;
  if (text == "miss") return Phase::miss;
  if (text == "unknown") return Phase::unknown;
  return std::nullopt;
}

std::vector<double> MeasurementSet::rtts() const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.rtt_ns);
  return out;
}

void HistogramSpec::validate() const {
  if (!(bin_width_ns > 0.0) || !std::isfinite(bin_width_ns)) throw std::invalid_argument("bin_width must be > 0");
  if (smoothing_window == 0 || smoothing_window % 2 == 0)
    throw std::invalid_argument("smoothing_window must be odd and >= 1");
  if (min_ns.has_value() != max_ns.has_value()) throw std::invalid_argument("histogram range needs both ends");
}

std::uint64_t Histogram::total() const noexcept {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

Histogram histogram(std::span<const double> samples, const HistogramSpec& spec) {
  spec.validate();
  if (samples.empty()) throw std::invalid_argument("histogram: empty measurement set");
  const std::size_t n = samples.size();
  const double* x = samples.data();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
#pragma omp parallel for reduction(min : lo) reduction(max : hi) schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
  }
  const detail::Layout layout = detail::make_layout(lo, hi, spec);

  Histogram h{layout.origin, layout.width, std::vector<std::uint64_t>(layout.bins, 0)};
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(layout.bins, 0);
#pragma omp for schedule(static) nowait
    for (std::size_t i = 0; i < n; ++i) ++local[layout.index(x[i])];
#pragma omp critical(nslab_histogram_merge)
    for (std::size_t b = 0; b < layout.bins; ++b) h.counts[b] += local[b];
  }
  return h;
}

std::vector<double> smooth(std::span<const std::uint64_t> counts, unsigned window) {
  if (window == 0 || window % 2 == 0) throw std::invalid_argument("smooth: window must be odd and >= 1");
  const std::size_t n = counts.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n, 0.0);
  // Running sum over [i - half, i + half] clipped to the histogram.
  std::uint64_t acc = 0;
  for (std::size_t j = 0; j < std::min(n, half); ++j) acc += counts[j];
  for (std::size_t i = 0; i < n; ++i) {
    if (i + half < n) acc += counts[i + half];
    if (i > half) acc -= counts[i - half - 1];
    out[i] = static_cast<double>(acc) / window;
  }
  return out;
}

Mode mode(const Histogram& hist, std::span<const double> smoothed, std::span<const double> samples) {
  if (smoothed.size() != hist.counts.size() || smoothed.empty())
    throw std::invalid_argument("mode: smoothed histogram does not match");
  std::size_t best = 0;
  for (std::size_t i = 1; i < smoothed.size(); ++i) {
    if (smoothed[i] > smoothed[best] || (smoothed[i] == smoothed[best] && hist.counts[i] > hist.counts[best]))
      best = i;
  }
  Mode m{best, hist.bin_start(best) + hist.bin_width_ns / 2.0};
  const double left = hist.bin_start(best);
  const double right = left + hist.bin_width_ns;
  const bool first = best == 0;
  const bool last = best + 1 == hist.counts.size();
  double sum = 0.0;
  std::uint64_t k = 0;
  for (double x : samples) {
    if ((first || x >= left) && (last || x < right)) {
      sum += x;
      ++k;
    }
  }
  if (k > 0) m.ns = sum / static_cast<double>(k);
  return m;
}

namespace {

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;  // sum of squared deviations
  std::size_t n = 0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  m.n = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  m.mean = sum / static_cast<double>(m.n);
  for (double x : xs) m.m2 += (x - m.mean) * (x - m.mean);
  return m;
}

}  // namespace

Calibration calibrate_from(std::span<const double> hit, std::span<const double> miss) {
  if (hit.size() < 2 || miss.size() < 2) throw std::invalid_argument("calibration needs >= 2 samples per case");
  const Moments h = moments(hit);
  const Moments m = moments(miss);
  Calibration c;
  c.mean_hit = h.mean;
  c.mean_miss = m.mean;
  c.threshold = (h.mean + m.mean) / 2.0;
  c.sigma_est = std::sqrt((h.m2 + m.m2) / static_cast<double>(h.n + m.n - 2));
  c.samples_per_case = std::min(h.n, m.n);
  return c;
}

int threshold_classify(double mode_ns, const Calibration& calib) noexcept {
  return mode_ns < calib.threshold ? 1 : 0;
}

BayesDecision bayes_classify(std::span<const double> samples, const Calibration& calib) {
  if (samples.empty()) throw std::invalid_argument("bayes_classify: empty measurement set");
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double n = static_cast<double>(samples.size());
  const double mean = sum / n;
  BayesDecision d;
  if (calib.sigma_est > 0.0) {
    // (mean - mu_miss)^2 - (mean - mu_hit)^2, factored to avoid cancellation.
    const double diff = (calib.mean_hit - calib.mean_miss) * (2.0 * mean - calib.mean_hit - calib.mean_miss);
    d.llr = n * diff / (2.0 * calib.sigma_est * calib.sigma_est);
    d.bit = d.llr > 0.0 ? 1 : 0;
    return d;
  }
  if (calib.mean_hit == calib.mean_miss) return d;
  d.bit = threshold_classify(mean, calib);
  if (mean != calib.threshold)
    d.llr = d.bit ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  return d;
}

Dispersion dispersion(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("dispersion: need at least 2 samples");
  const double* x = samples.data();

  double sum = 0.0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
  for (std::size_t i = 0; i < n; ++i) sum += x[i];
  const double mean = sum / static_cast<double>(n);

  double m2 = 0.0;
#pragma omp parallel for reduction(+ : m2) schedule(static)
  for (std::size_t i = 0; i < n; ++i) m2 += (x[i] - mean) * (x[i] - mean);
  const double sd = std::sqrt(m2 / static_cast<double>(n - 1));

  const double band = 3.0 * sd + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(mean);
  std::size_t within = 0;
#pragma omp parallel for reduction(+ : within) schedule(static)
  for (std::size_t i = 0; i < n; ++i) within += std::abs(x[i] - mean) <= band ? 1 : 0;

  return {mean, sd, static_cast<double>(within) / static_cast<double>(n)};
}

double error_rate(std::span<const int> recovered, std::span<const int> truth) {
  if (recovered.size() != truth.size()) throw std::invalid_argument("error_rate: length mismatch");
  if (truth.empty()) throw std::invalid_argument("error_rate: empty sequences");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += (recovered[i] != 0) != (truth[i] != 0);
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

void write_samples_csv(std::ostream& out, std::span<const MeasurementSet> sets) {
  out << "sequence,rtt_ns,phase\n";
  char buf[96];
  for (const auto& set : sets) {
    const auto phase = to_string(set.label);
    for (const auto& s : set.samples) {
      std::snprintf(buf, sizeof buf, "%llu,%.3f,", static_cast<unsigned long long>(s.sequence), s.rtt_ns);
      out << buf << phase << '\n';
    }
  }
}

std::vector<MeasurementSet> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "sequence,rtt_ns,phase")
    throw std::runtime_error("samples csv: missing header 'sequence,rtt_ns,phase'");
  std::vector<MeasurementSet> sets;
  std::map<Phase, std::size_t> index;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string seq, rtt, phase;
    if (!std::getline(row, seq, ',') || !std::getline(row, rtt, ',') || !std::getline(row, phase))
      throw std::runtime_error("samples csv: malformed line " + std::to_string(lineno));
    const auto label = parse_phase(phase);
    if (!label) throw std::runtime_error("samples csv: unknown phase on line " + std::to_string(lineno));
    wire::Sample s;
    try {
      s.sequence = std::stoull(seq);
      s.rtt_ns = std::stod(rtt);
    } catch (const std::exception&) {
      throw std::runtime_error("samples csv: bad number on line " + std::to_string(lineno));
    }
    if (s.rtt_ns < 0.0) throw std::runtime_error("samples csv: negative rtt on line " + std::to_string(lineno));
    auto [it, inserted] = index.try_emplace(*label, sets.size());
    if (inserted) sets.push_back(MeasurementSet{{}, *label});
    sets[it->second].samples.push_back(s);
  }
  return sets;
}

void write_histogram_csv(std::ostream& out, const Histogram& hist, std::span<const double> smoothed) {
  if (smoothed.size() != hist.counts.size()) throw std::invalid_argument("histogram csv: size mismatch");
  out << "bin_start_ns,count,smoothed_count\n";
  char buf[128];
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.3f,%llu,%.6f\n", hist.bin_start(i),
                  static_cast<unsigned long long>(hist.counts[i]), smoothed[i]);
    out << buf;
  }
}

}  // namespace nslab::stats
