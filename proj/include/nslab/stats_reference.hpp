#pragma once

// Serial reference kernels. Same contracts as the parallel versions in
// nslab/stats.hpp; used as test oracles and benchmark baselines.

#include <span>

#include "nslab/stats.hpp"

namespace nslab::stats::reference {

Histogram histogram(std::span<const double> samples, const HistogramSpec& spec);
Dispersion dispersion(std::span<const double> samples);

}  // namespace nslab::stats::reference
