#pragma once

// Deterministic model of the microarchitectural state a remote Spectre
// attacker can influence: per-site branch predictor, the cache state of one
// transmit variable plus one "ASLR" line, and the power state of the upper
// half of the 256-bit SIMD unit. Time is a virtual nanosecond clock; every
// gadget reports cost in CPU cycles.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace nslab::uarch {

using Cycles = std::uint64_t;
using Nanos = std::uint64_t;
using Rng = std::mt19937_64;

class VirtualClock {
 public:
  Nanos now() const noexcept { return now_; }

  // Throws std::invalid_argument for a negative delta.
  void advance(std::int64_t delta_ns);
  // Throws std::invalid_argument when t lies in the past.
  void advance_to(Nanos t);

  bool operator==(const VirtualClock&) const = default;

 private:
  Nanos now_ = 0;
};

enum class BranchSite : std::uint8_t { leak_cache = 0, leak_avx, aslr, value_cmp };
inline constexpr std::size_t kBranchSiteCount = 4;

/// 2-bit saturating counter per branch site, initialised strongly-not-taken.
class BranchPredictor {
 public:
  static constexpr std::uint8_t kMaxCounter = 3;

  bool predict(BranchSite site) const noexcept { return counters_[index(site)] >= 2; }
  void train(BranchSite site, bool taken) noexcept;
  std::uint8_t counter(BranchSite site) const noexcept { return counters_[index(site)]; }

  bool operator==(const BranchPredictor&) const = default;

 private:
  static constexpr std::size_t index(BranchSite s) noexcept { return static_cast<std::size_t>(s); }
  std::array<std::uint8_t, kBranchSiteCount> counters_{};
};

struct CacheModel {
  bool flag_cached = false;
  std::optional<std::uint64_t> aslr_cached_offset;
  Cycles hit_cycles = 40;
  Cycles miss_cycles = 200;

  Cycles delta() const noexcept { return miss_cycles - hit_cycles; }
  bool operator==(const CacheModel&) const = default;
};

struct AvxUnit {
  std::optional<Nanos> last_use;  // empty: never used, fully powered down
  Cycles warm_cycles = 210;
  Cycles max_penalty_cycles = 366;
  Nanos decay_start = 500'000;
  Nanos decay_end = 1'000'000;

  bool operator==(const AvxUnit&) const = default;
};

/// Tunable constants. Defaults: 2 GHz core, 40/200-cycle hit/miss, 210-cycle
/// warm 256-bit op with a 366-cycle cold penalty ramping in over 0.5..1 ms of
/// idleness, eviction scale so that a 590 kB transfer evicts with p >= 0.99.
struct UarchParams {
  double cycle_time_ns = 0.5;
  Cycles hit_cycles = 40;
  Cycles miss_cycles = 200;
  Cycles avx_warm_cycles = 210;
  Cycles avx_max_penalty_cycles = 366;
  Nanos avx_decay_start_ns = 500'000;
  Nanos avx_decay_end_ns = 1'000'000;
  double eviction_lambda_bytes = 128'116.0;

  // Throws std::invalid_argument on an inconsistent parameter set.
  void validate() const;
  bool operator==(const UarchParams&) const = default;
};

struct MicroarchState {
  MicroarchState() : MicroarchState(UarchParams{}) {}
  explicit MicroarchState(const UarchParams& params);

  VirtualClock clock;
  BranchPredictor predictor;
  CacheModel cache;
  AvxUnit avx;
  double cycle_time_ns = 0.5;
  double eviction_lambda_bytes = 128'116.0;
  // Architectural value of `flag`. Lives beside the microarchitectural state
  // so non-interference can be asserted on one object.
  bool flag_value = false;

  double to_nanos(Cycles c) const noexcept { return static_cast<double>(c) * cycle_time_ns; }
  bool operator==(const MicroarchState&) const = default;
};

/// The victim's memory as a flat bit region. The first bitstream_length bits
/// are the in-bounds array; everything after is out-of-bounds (the secret).
/// Bits are MSB-first within each byte; out-of-bounds indices wrap modulo the
/// region size.
class SecretStore {
 public:
  SecretStore() = default;
  SecretStore(std::vector<std::uint8_t> region, std::uint64_t bitstream_length);

  /// public_bits zero bits (rounded up to whole bytes) followed by secret.
  static SecretStore with_secret(std::uint64_t public_bits, std::span<const std::uint8_t> secret);

  std::uint64_t bitstream_length() const noexcept { return bitstream_length_; }
  std::uint64_t region_bits() const noexcept { return region_.size() * 8; }
  /// First bit index past the public array: where a with_secret() secret starts.
  std::uint64_t secret_offset() const noexcept { return (bitstream_length_ + 7) / 8 * 8; }
  bool in_bounds(std::uint64_t x) const noexcept { return x < bitstream_length_; }
  bool bit(std::uint64_t x) const noexcept;
  std::span<const std::uint8_t> bytes() const noexcept { return region_; }

  bool operator==(const SecretStore&) const = default;

 private:
  std::vector<std::uint8_t> region_;
  std::uint64_t bitstream_length_ = 0;
};

enum class Speculation : std::uint8_t { enabled, barrier };
enum class Access : std::uint8_t { in_bounds, out_of_bounds };

struct GadgetResult {
  Cycles cycles = 0;              // architecturally retired work
  Cycles speculative_cycles = 0;  // squashed work; never reaches the response
};

GadgetResult leak_gadget_cache(MicroarchState& state, const SecretStore& secrets, std::uint64_t x,
                               Speculation spec = Speculation::enabled);
GadgetResult leak_gadget_avx(MicroarchState& state, const SecretStore& secrets, std::uint64_t x,
                             Speculation spec = Speculation::enabled);

Cycles transmit_gadget_cache(MicroarchState& state);
Cycles transmit_gadget_avx(MicroarchState& state);

/// Penalty for a 256-bit op after `idle_ns` of inactivity: 0 before
/// decay_start, max at or after decay_end, linear (round half up) between.
Cycles avx_penalty(const AvxUnit& unit, std::int64_t idle_ns);

double eviction_probability(double bytes, double lambda_bytes);
/// Scale λ such that eviction_probability(bytes, λ) == probability.
double eviction_lambda_for(double bytes, double probability);

/// Bulk transfer of `bytes`; evicts the flag and the ASLR line with
/// probability eviction_probability(bytes). Returns whether it evicted.
bool thrash(MicroarchState& state, std::uint64_t bytes, Rng& rng);

/// `if (x < array_length) access(array[x])`. An out-of-bounds x addresses
/// offset x - array_length of the probed region.
void aslr_gadget(MicroarchState& state, std::uint64_t x, std::uint64_t array_length,
                 std::uint64_t valid_offset, Speculation spec = Speculation::enabled);
/// Speculative access of every offset in [lo, hi); only valid_offset is cacheable.
void aslr_range_gadget(MicroarchState& state, std::uint64_t lo, std::uint64_t hi,
                       std::uint64_t valid_offset, Speculation spec = Speculation::enabled);
/// Function touching the known-address line. Reads reset the line.
Cycles timing_function(MicroarchState& state, std::uint64_t valid_offset);

/// `if (slot in bounds) if (guess < value[slot]) access(flag)`. The in-bounds
/// slot holds the public value 0, the out-of-bounds slot holds secret_value.
void value_threshold_gadget(MicroarchState& state, std::uint64_t guess, std::uint64_t secret_value,
                            Access access, Speculation spec = Speculation::enabled);

}  // namespace nslab::uarch
