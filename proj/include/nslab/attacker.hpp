#pragma once

// The attacking client: corner-case calibration, the mistrain / reset / leak /
// transmit measurement loop over either covert channel, the ASLR binary
// search and value-thresholding.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "nslab/stats.hpp"
#include "nslab/victim.hpp"
#include "nslab/wire.hpp"

namespace nslab::attacker {

enum class Channel : std::uint8_t { cache, avx };
enum class Classifier : std::uint8_t { bayes, mode };

std::string_view to_string(Channel c) noexcept;
std::string_view to_string(Classifier c) noexcept;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RequestTally {
  std::array<std::uint64_t, wire::kMaxOpcode + 1> by_opcode{};

  std::uint64_t of(wire::Opcode op) const noexcept { return by_opcode[static_cast<std::size_t>(op)]; }
  /// Packets that would cross a real network: everything except the
  /// ADVANCE_CLOCK / RESET simulation controls.
  std::uint64_t attack_requests() const noexcept;
  RequestTally& operator+=(const RequestTally& o) noexcept;
  RequestTally operator-(const RequestTally& o) const noexcept;
};

/// Attacker's view of one victim over one transport.
class Session {
 public:
  Session(wire::Transport& transport, victim::ClockMode clock_mode = victim::ClockMode::virtual_clock);

  /// Untimed request; throws ProtocolError on a non-OK status or nonce mismatch.
  wire::ResponsePacket send(wire::Opcode op, std::uint64_t arg = 0);
  /// Timed request; returns the round-trip time in ns.
  double measure(wire::Opcode op, std::uint64_t arg = 0);
  /// Let the victim sit idle: ADVANCE_CLOCK in virtual mode, a real sleep otherwise.
  void idle(std::uint64_t ns);

  const RequestTally& tally() const noexcept { return tally_; }
  victim::ClockMode clock_mode() const noexcept { return clock_mode_; }

 private:
  wire::RequestPacket next(wire::Opcode op, std::uint64_t arg);
  void check(const wire::RequestPacket& req, const wire::ResponsePacket& resp) const;

  wire::Transport& transport_;
  victim::ClockMode clock_mode_;
  std::uint64_t nonce_ = 0;
  RequestTally tally_;
};

struct ExtractionPlan {
  Channel channel = Channel::cache;
  std::uint64_t measurements_per_bit = 1'000'000;
  unsigned mistrain_count = 10;
  std::uint64_t reset_bytes = 590'000;
  std::uint64_t avx_wait_ns = 1'000'000;
  std::uint64_t first_bit = 64;  // out-of-bounds index of the first target bit
  std::uint64_t in_bounds_length = 64;  // array length used to pick mistraining indices
  std::uint64_t calibration_samples = 0;  // per corner case; 0 means 4 × N
  Classifier classifier = Classifier::bayes;
  double min_confidence = 1.0;  // |z| below this is flagged
  bool keep_samples = false;
  double packet_cost_ns = 17'300.0;  // for projected leak rates

  std::uint64_t calibration_count() const noexcept {
    return calibration_samples ? calibration_samples : 4 * measurements_per_bit;
  }
  // Throws std::invalid_argument.
  void validate() const;
};

/// Measures the known-fast and known-slow transmit corner cases. Throws
/// CalibrationError when they cannot be told apart at the requested count.
stats::Calibration calibrate(Session& session, const ExtractionPlan& plan);

struct BitResult {
  std::uint64_t index = 0;
  int bit = 0;
  double confidence = 0.0;  // signed z, positive favours 1
  bool low_confidence = false;
  double mean_ns = 0.0;
  double mode_ns = 0.0;
  double llr = 0.0;
  std::vector<double> samples;  // only with plan.keep_samples
};

/// One bit: N × (mistrain, reset, out-of-bounds leak, timed transmit).
BitResult leak_bit(Session& session, const ExtractionPlan& plan, const stats::Calibration& calib,
                   std::uint64_t bit_index);

struct RateProjection {
  double requests_per_bit = 0.0;
  double request_seconds_per_bit = 0.0;  // requests × packet cost
  double idle_seconds_per_bit = 0.0;     // explicit waits (AVX reset)
  double bits_per_hour = 0.0;            // request time only
  double minutes_per_byte = 0.0;         // request time only
};

RateProjection project_rate(const ExtractionPlan& plan, double requests_per_bit);

struct LeakReport {
  std::vector<std::uint8_t> bytes;
  std::vector<BitResult> bits;  // MSB-first per byte
  RequestTally requests;
  RateProjection rate;

  std::vector<int> bit_values() const;
  bool any_low_confidence() const;
};

/// Called after every bit, before it is stored; may consume bit.samples.
using ProgressFn =
    std::function<void(BitResult& bit, std::size_t bits_done, std::size_t bits_total, const RateProjection&)>;

/// Sequential leak_bit over byte_count bytes starting at plan.first_bit.
LeakReport leak_range(Session& session, const ExtractionPlan& plan, const stats::Calibration& calib,
                      std::size_t byte_count, const ProgressFn& progress = {});

/// Fresh, independent session per stream id (a victim replica plus transport).
class SessionHandle {
 public:
  virtual ~SessionHandle() = default;
  virtual Session& session() = 0;
};
using SessionFactory = std::function<std::unique_ptr<SessionHandle>(std::uint64_t stream)>;

/// Each bit leaked on its own replica (stream = bit position), bits fanned
/// out with OpenMP. Results do not depend on the thread count.
LeakReport leak_range_forked(const SessionFactory& factory, const ExtractionPlan& plan,
                             const stats::Calibration& calib, std::size_t byte_count);
/// Serial reference for leak_range_forked.
LeakReport leak_range_forked_serial(const SessionFactory& factory, const ExtractionPlan& plan,
                                    const stats::Calibration& calib, std::size_t byte_count);

struct AslrPlan {
  unsigned space_bits = 20;
  std::uint64_t probes_per_check = 1'000'000;
  unsigned mistrain_count = 10;
  unsigned max_retries = 3;
  std::uint64_t calibration_samples = 0;  // 0 means probes_per_check
  std::uint64_t in_bounds_length = 64;

  void validate() const;
};

struct AslrRound {
  std::uint64_t lo = 0, mid = 0, hi = 0;
  double mean_lower = 0.0;
  double mean_upper = 0.0;
  bool went_lower = false;
  unsigned retries = 0;
};

struct AslrResult {
  bool success = false;
  std::uint64_t offset = 0;
  std::vector<AslrRound> rounds;
  stats::Calibration calibration;
};

AslrResult break_aslr(Session& session, const AslrPlan& plan);

struct ValuePlan {
  unsigned value_bits = 16;
  std::uint64_t measurements_per_round = 100'000;
  unsigned mistrain_count = 10;
  std::uint64_t reset_bytes = 590'000;

  void validate() const;
};

struct ValueRound {
  std::uint64_t lo = 0, hi = 0, guess = 0;
  double mean_ns = 0.0;
  bool above = false;  // secret > guess
};

struct ValueResult {
  std::uint64_t value = 0;
  std::vector<ValueRound> rounds;
};

/// Binary search on `guess < secret` leaked through the cache channel.
/// calib must come from calibrate() with a cache-channel plan.
ValueResult value_threshold_search(Session& session, const ValuePlan& plan, const stats::Calibration& calib);

}  // namespace nslab::attacker
