#include "nslab/stats_reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "stats_layout.hpp"

namespace nslab::stats::reference {

Histogram histogram(std::span<const double> samples, const HistogramSpec& spec) {
  spec.validate();
  if (samples.empty()) throw std::invalid_argument("histogram: empty measurement set");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const detail::Layout layout = detail::make_layout(*lo, *hi, spec);
  Histogram h{layout.origin, layout.width, std::vector<std::uint64_t>(layout.bins, 0)};
  for (double x : samples) ++h.counts[layout.index(x)];
  return h;
}

Dispersion dispersion(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("dispersion: need at least 2 samples");
  double sum = 0.0;
  for (double x : samples) sum += x;
  const double mean = sum / static_cast<double>(n);
  double m2 = 0.0;
  for (double x : samples) m2 += (x - mean) * (x - mean);
  const double sd = std::sqrt(m2 / static_cast<double>(n - 1));
  const double band = 3.0 * sd + 4.0 * std::numeric_limits<double>::epsilon() * std::abs(mean);
  std::size_t within = 0;
  for (double x : samples) within += std::abs(x - mean) <= band ? 1 : 0;
  return {mean, sd, static_cast<double>(within) / static_cast<double>(n)};
}

}  // namespace nslab::stats::reference
