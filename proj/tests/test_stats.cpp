#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "nslab/stats.hpp"
#include "nslab/stats_reference.hpp"

using namespace nslab;
using namespace nslab::stats;

namespace {

std::vector<double> gaussian(std::size_t n, double mean, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> xs(n);
  for (auto& x : xs) x = d(rng);
  return xs;
}

std::vector<double> naive_smooth(const std::vector<std::uint64_t>& c, unsigned w) {
  std::vector<double> out(c.size());
  const long half = w / 2;
  for (long i = 0; i < static_cast<long>(c.size()); ++i) {
    double s = 0;
    for (long j = i - half; j <= i + half; ++j)
      if (j >= 0 && j < static_cast<long>(c.size())) s += static_cast<double>(c[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = s / w;
  }
  return out;
}

}  // namespace

TEST_CASE("parallel histogram equals the serial reference") {
  for (std::size_t n : {1u, 2u, 17u, 1000u, 250'000u}) {
    const auto xs = gaussian(n, 200'000, 15'600, n);
    HistogramSpec spec;
    CHECK(histogram(xs, spec) == reference::histogram(xs, spec));
    spec.bin_width_ns = 137.5;
    spec.smoothing_window = 3;
    CHECK(histogram(xs, spec) == reference::histogram(xs, spec));
    spec.min_ns = 190'000;
    spec.max_ns = 210'000;
    CHECK(histogram(xs, spec) == reference::histogram(xs, spec));
  }
}

TEST_CASE("histogram geometry") {
  const std::vector<double> xs{1500, 2500, 2600, 9999};
  HistogramSpec spec;  // 1 µs bins, window 11 -> 5 pad bins each side
  const auto h = histogram(xs, spec);
  CHECK(h.origin_ns == -4000.0);
  CHECK(h.total() == 4);
  CHECK(h.counts[5] == 1);
  CHECK(h.counts[6] == 2);
  CHECK(h.counts[13] == 1);
  CHECK(h.counts.size() == 19);

  spec.min_ns = 2000;
  spec.max_ns = 3000;
  const auto clamped = histogram(xs, spec);
  CHECK(clamped.counts.size() == 2);
  CHECK(clamped.counts[0] == 3);
  CHECK(clamped.counts[1] == 1);
  CHECK_THROWS(histogram(std::vector<double>{}, HistogramSpec{}));
  spec.smoothing_window = 4;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("smoothing matches a naive moving average and conserves mass") {
  std::mt19937_64 rng(1);
  for (unsigned w : {1u, 3u, 11u, 21u}) {
    std::vector<std::uint64_t> c(57);
    for (auto& x : c) x = rng() % 100;
    const auto s = smooth(c, w);
    const auto o = naive_smooth(c, w);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(s[i] == doctest::Approx(o[i]).epsilon(1e-12));
  }
  const auto xs = gaussian(10'000, 5e5, 3e4, 2);
  const HistogramSpec spec;
  const auto h = histogram(xs, spec);
  double mass = 0;
  for (double v : smooth(h.counts, spec.smoothing_window)) mass += v;
  CHECK(mass == doctest::Approx(10'000.0).epsilon(1e-9));
}

TEST_CASE("mode: argmax of the smoothed histogram, refined to the in-bin mean") {
  const std::vector<double> xs{100.0, 1200.0, 1300.0, 1400.0, 5100.0};
  HistogramSpec spec;
  spec.smoothing_window = 1;
  const auto h = histogram(xs, spec);
  const auto s = smooth(h.counts, 1);
  const auto m = mode(h, s, xs);
  CHECK(h.bin_start(m.bin) == 1000.0);
  CHECK(m.ns == doctest::Approx(1300.0));

  // Tie in the smoothed counts goes to the larger raw count.
  Histogram tie{0.0, 1.0, {0, 3, 0, 2, 2}};
  const std::vector<double> flat{1.0, 1.0, 1.0, 1.0, 1.0};
  const auto tm = mode(tie, flat, std::vector<double>{1.5, 1.5, 1.5, 3.5, 3.5, 4.5, 4.5});
  CHECK(tm.bin == 1);

  // Gaussian data: mode near the mean.
  const auto g = gaussian(200'000, 300'000, 15'600, 3);
  const auto gh = histogram(g, HistogramSpec{});
  const auto gm = mode(gh, smooth(gh.counts, 11), g);
  CHECK(std::abs(gm.ns - 300'000) < 2'000);
}

TEST_CASE("calibration from corner cases") {
  const auto hit = gaussian(50'000, 200'520, 15'600, 4);
  const auto miss = gaussian(50'000, 200'600, 15'600, 5);
  const auto c = calibrate_from(hit, miss);
  double mh = 0, mm = 0;
  for (double x : hit) mh += x;
  for (double x : miss) mm += x;
  mh /= hit.size();
  mm /= miss.size();
  double ss = 0;
  for (double x : hit) ss += (x - mh) * (x - mh);
  for (double x : miss) ss += (x - mm) * (x - mm);
  CHECK(c.mean_hit == doctest::Approx(mh).epsilon(1e-12));
  CHECK(c.mean_miss == doctest::Approx(mm).epsilon(1e-12));
  CHECK(c.threshold == doctest::Approx((mh + mm) / 2).epsilon(1e-12));
  CHECK(c.sigma_est == doctest::Approx(std::sqrt(ss / (hit.size() + miss.size() - 2))).epsilon(1e-9));
  CHECK(c.samples_per_case == 50'000);

  const std::vector<double> h0(10, 200'520.0), m0(10, 200'600.0);
  const auto z = calibrate_from(h0, m0);
  CHECK(z.threshold == 200'560.0);
  CHECK(z.sigma_est == 0.0);
  CHECK(z.valid());
}

TEST_CASE("Bayes decision equals the explicit Gaussian log-likelihood ratio") {
  Calibration c;
  c.mean_hit = 200'520;
  c.mean_miss = 200'600;
  c.threshold = 200'560;
  c.sigma_est = 15'600;
  std::mt19937_64 rng(6);
  for (int t = 0; t < 200; ++t) {
    const auto xs = gaussian(1 + rng() % 5000, 200'560 + static_cast<double>(rng() % 200) - 100, 15'600, rng());
    double mean = 0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    const double n = static_cast<double>(xs.size());
    const double lh = -n * (mean - c.mean_hit) * (mean - c.mean_hit) / (2 * c.sigma_est * c.sigma_est);
    const double lm = -n * (mean - c.mean_miss) * (mean - c.mean_miss) / (2 * c.sigma_est * c.sigma_est);
    const auto d = bayes_classify(xs, c);
    CHECK(d.llr == doctest::Approx(lh - lm).epsilon(1e-6));
    CHECK(d.bit == (mean < c.threshold ? 1 : 0));
  }
}

TEST_CASE("classifier symmetry: reflecting samples about the threshold flips the decision") {
  Calibration c{1000.0, 1100.0, 1050.0, 40.0, 100};
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    auto xs = gaussian(101, 1050 + static_cast<double>(rng() % 60) - 30, 40, rng());
    std::vector<double> mirrored;
    for (double x : xs) mirrored.push_back(2 * c.threshold - x);
    const auto a = bayes_classify(xs, c), b = bayes_classify(mirrored, c);
    CHECK(a.llr == doctest::Approx(-b.llr).epsilon(1e-6));
    if (a.llr != 0.0) CHECK(a.bit != b.bit);
  }
  CHECK(threshold_classify(1049.9, c) == 1);
  CHECK(threshold_classify(1050.0, c) == 0);
}

TEST_CASE("Bayes with zero sigma falls back to the threshold rule") {
  Calibration c{10.0, 20.0, 15.0, 0.0, 4};
  CHECK(bayes_classify(std::vector<double>{10, 10}, c).bit == 1);
  CHECK(std::isinf(bayes_classify(std::vector<double>{10, 10}, c).llr));
  CHECK(bayes_classify(std::vector<double>{20, 20}, c).bit == 0);
  CHECK(bayes_classify(std::vector<double>{15}, c).llr == 0.0);
}

TEST_CASE("dispersion: parallel vs serial, and the three-sigma bound on every preset") {
  for (double sigma : {15'600.0, 52'300.0, 128'500.0}) {
    const auto xs = gaussian(100'000, 300'000, sigma, static_cast<std::uint64_t>(sigma));
    const auto p = dispersion(xs);
    const auto r = reference::dispersion(xs);
    CHECK(p.mean == doctest::Approx(r.mean).epsilon(1e-12));
    CHECK(p.stddev == doctest::Approx(r.stddev).epsilon(1e-9));
    CHECK(p.three_sigma_fraction == r.three_sigma_fraction);
    CHECK(p.three_sigma_fraction >= 0.888);
    CHECK(std::abs(p.stddev / sigma - 1.0) < 0.02);
  }
  const std::vector<double> same(100, 7.0);
  CHECK(dispersion(same).three_sigma_fraction == 1.0);
  CHECK_THROWS(dispersion(std::vector<double>{1.0}));
}

TEST_CASE("error rate") {
  const std::vector<int> a{0, 1, 1, 0}, b{0, 1, 0, 1};
  CHECK(error_rate(a, b) == 0.5);
  CHECK(error_rate(a, a) == 0.0);
  CHECK_THROWS(error_rate(a, std::vector<int>{0}));
}

TEST_CASE("sample CSV round trip") {
  std::vector<MeasurementSet> sets{{{{1.5, 0}, {2.25, 1}}, Phase::hit}, {{{3.0, 2}}, Phase::miss}};
  std::stringstream s;
  write_samples_csv(s, sets);
  CHECK(s.str() == "sequence,rtt_ns,phase\n0,1.500,hit\n1,2.250,hit\n2,3.000,miss\n");
  const auto back = read_samples_csv(s);
  REQUIRE(back.size() == 2);
  CHECK(back[0].label == Phase::hit);
  CHECK(back[0].samples.size() == 2);
  CHECK(back[1].samples[0].rtt_ns == 3.0);

  std::stringstream bad("seq,rtt\n");
  CHECK_THROWS(read_samples_csv(bad));
  std::stringstream neg("sequence,rtt_ns,phase\n0,-1,hit\n");
  CHECK_THROWS(read_samples_csv(neg));
}

TEST_CASE("histogram CSV") {
  Histogram h{1000.0, 500.0, {1, 2}};
  std::stringstream s;
  write_histogram_csv(s, h, std::vector<double>{0.5, 1.0});
  CHECK(s.str() == "bin_start_ns,count,smoothed_count\n1000.000,1,0.500000\n1500.000,2,1.000000\n");
}
