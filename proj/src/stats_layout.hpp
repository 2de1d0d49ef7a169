#pragma once

// Bin geometry shared by the parallel and serial histogram kernels so both
// produce identical layouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "nslab/stats.hpp"

namespace nslab::stats::detail {

inline constexpr std::size_t kMaxBins = 1u << 26;

struct Layout {
  double origin = 0.0;
  double width = 1.0;
  std::size_t bins = 1;

  std::size_t index(double x) const noexcept {
    const double f = std::floor((x - origin) / width);
    if (!(f > 0.0)) return 0;  // also catches NaN
    return std::min(static_cast<std::size_t>(f), bins - 1);
  }
};

inline Layout make_layout(double lo, double hi, const HistogramSpec& spec) {
  Layout l;
  l.width = spec.bin_width_ns;
  const double pad = spec.smoothing_window / 2;
  if (spec.min_ns && spec.max_ns) {
    lo = *spec.min_ns;
    hi = *spec.max_ns;
    if (!(hi >= lo)) throw std::invalid_argument("histogram: max_ns < min_ns");
    l.origin = lo;
    l.bins = static_cast<std::size_t>(std::floor((hi - lo) / l.width)) + 1;
  } else {
    l.origin = std::floor(lo / l.width) * l.width - pad * l.width;
    const double span = std::floor((hi - l.origin) / l.width) + 1.0 + pad;
    if (!(span < static_cast<double>(kMaxBins))) throw std::length_error("histogram: too many bins");
    l.bins = static_cast<std::size_t>(span);
  }
  if (l.bins > kMaxBins) throw std::length_error("histogram: too many bins");
  return l;
}

}  // namespace nslab::stats::detail
