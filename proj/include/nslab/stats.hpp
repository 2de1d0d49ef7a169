#pragma once

// Analytics over round-trip measurement sets. The binning and dispersion
// kernels are OpenMP-parallel; nslab/stats_reference.hpp keeps the serial
// versions they are tested and benchmarked against.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nslab/wire.hpp"

namespace nslab::stats {

enum class Phase : std::uint8_t { hit, miss, unknown };
std::string_view to_string(Phase p) noexcept;
std::optional<Phase> parse_phase(std::string_view text) noexcept;

struct MeasurementSet {
  std::vector<wire::Sample> samples;
  Phase label = Phase::unknown;

  std::vector<double> rtts() const;
};

struct HistogramSpec {
  double bin_width_ns = 1000.0;
  std::optional<double> min_ns;  // auto-fit when empty
  std::optional<double> max_ns;
  unsigned smoothing_window = 11;

  void validate() const;
};

struct Histogram {
  double origin_ns = 0.0;  // left edge of bin 0
  double bin_width_ns = 1.0;
  std::vector<std::uint64_t> counts;

  double bin_start(std::size_t i) const noexcept { return origin_ns + static_cast<double>(i) * bin_width_ns; }
  std::uint64_t total() const noexcept;
  bool operator==(const Histogram&) const = default;
};

/// Bins samples. The auto-fitted range is padded with smoothing_window/2 empty
/// bins on each side so that smooth() keeps every count. Samples outside an
/// explicit range are clamped into the edge bins. Throws on an empty set.
Histogram histogram(std::span<const double> samples, const HistogramSpec& spec);

/// Centred moving average with zero padding; window must be odd.
std::vector<double> smooth(std::span<const std::uint64_t> counts, unsigned window);

struct Mode {
  std::size_t bin = 0;
  double ns = 0.0;  // mean of the samples that fell into the modal bin
};

/// Argmax of the smoothed histogram; ties go to the larger raw count, then
/// the lower bin.
Mode mode(const Histogram& hist, std::span<const double> smoothed, std::span<const double> samples);

struct Calibration {
  double mean_hit = 0.0;
  double mean_miss = 0.0;
  double threshold = 0.0;
  double sigma_est = 0.0;
  std::uint64_t samples_per_case = 0;

  bool valid() const noexcept { return mean_hit < threshold && threshold < mean_miss; }
};

/// Midpoint threshold and pooled standard deviation from the two corner cases.
Calibration calibrate_from(std::span<const double> hit, std::span<const double> miss);

/// 1 iff mode lies strictly on the fast side of the threshold.
int threshold_classify(double mode_ns, const Calibration& calib) noexcept;

struct BayesDecision {
  int bit = 0;
  double llr = 0.0;  // log p(mean | hit) - log p(mean | miss)
};

/// Two-class Gaussian likelihood ratio on the sample mean. Falls back to the
/// threshold rule on the mean when sigma_est is zero.
BayesDecision bayes_classify(std::span<const double> samples, const Calibration& calib);

struct Dispersion {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation
  double three_sigma_fraction = 0.0;
};

/// Requires at least two samples.
Dispersion dispersion(std::span<const double> samples);

/// Hamming distance / length. Throws on a length mismatch or empty input.
double error_rate(std::span<const int> recovered, std::span<const int> truth);

/// CSV "sequence,rtt_ns,phase".
void write_samples_csv(std::ostream& out, std::span<const MeasurementSet> sets);
std::vector<MeasurementSet> read_samples_csv(std::istream& in);

/// CSV "bin_start_ns,count,smoothed_count".
void write_histogram_csv(std::ostream& out, const Histogram& hist, std::span<const double> smoothed);

}  // namespace nslab::stats
