#include "nslab/uarch.hpp"

#include <cmath>
#include <stdexcept>

namespace nslab::uarch {

void VirtualClock::advance(std::int64_t delta_ns) {
  if (delta_ns < 0) throw std::invalid_argument("VirtualClock::advance: negative delta");
  now_ += static_cast<Nanos>(delta_ns);
}

void VirtualClock::advance_to(Nanos t) {
  if (t < now_) throw std::invalid_argument("VirtualClock::advance_to: time moves backwards");
  now_ = t;
}

void BranchPredictor::train(BranchSite site, bool taken) noexcept {
  auto& c = counters_[index(site)];
  if (taken) {
    if (c < kMaxCounter) ++c;
  } else if (c > 0) {
    --c;
  }
}

void UarchParams::validate() const {
  if (!(cycle_time_ns > 0.0) || !std::isfinite(cycle_time_ns))
    throw std::invalid_argument("cycle_time_ns must be positive");
  if (miss_cycles <= hit_cycles) throw std::invalid_argument("miss_cycles must exceed hit_cycles");
  if (avx_decay_end_ns <= avx_decay_start_ns)
    throw std::invalid_argument("avx decay end must come after decay start");
  if (!(eviction_lambda_bytes > 0.0) || !std::isfinite(eviction_lambda_bytes))
    throw std::invalid_argument("eviction_lambda_bytes must be positive");
}

MicroarchState::MicroarchState(const UarchParams& params) {
  params.validate();
  cache.hit_cycles = params.hit_cycles;
  cache.miss_cycles = params.miss_cycles;
  avx.warm_cycles = params.avx_warm_cycles;
  avx.max_penalty_cycles = params.avx_max_penalty_cycles;
  avx.decay_start = params.avx_decay_start_ns;
  avx.decay_end = params.avx_decay_end_ns;
  cycle_time_ns = params.cycle_time_ns;
  eviction_lambda_bytes = params.eviction_lambda_bytes;
}

SecretStore::SecretStore(std::vector<std::uint8_t> region, std::uint64_t bitstream_length)
    : region_(std::move(region)), bitstream_length_(bitstream_length) {
  if (bitstream_length_ > region_bits())
    throw std::invalid_argument("SecretStore: bitstream_length exceeds region");
  if (region_.empty()) throw std::invalid_argument("SecretStore: empty region");
}

SecretStore SecretStore::with_secret(std::uint64_t public_bits, std::span<const std::uint8_t> secret) {
  std::vector<std::uint8_t> region((public_bits + 7) / 8, 0);
  region.insert(region.end(), secret.begin(), secret.end());
  return SecretStore(std::move(region), public_bits);
}

bool SecretStore::bit(std::uint64_t x) const noexcept {
  const std::uint64_t i = x % region_bits();
  return (region_[i / 8] >> (7 - i % 8)) & 1u;
}

namespace {

// Cost of touching `flag`; the access itself caches it.
Cycles touch_flag(CacheModel& cache) {
  const Cycles c = cache.flag_cached ? cache.hit_cycles : cache.miss_cycles;
  cache.flag_cached = true;
  return c;
}

Cycles run_256bit_op(MicroarchState& s) {
  const std::int64_t idle =
      s.avx.last_use ? static_cast<std::int64_t>(s.clock.now() - *s.avx.last_use) : INT64_MAX;
  s.avx.last_use = s.clock.now();
  return s.avx.warm_cycles + avx_penalty(s.avx, idle);
}

bool speculates(const MicroarchState& s, BranchSite site, Speculation spec) {
  return spec == Speculation::enabled && s.predictor.predict(site);
}

}  // namespace

GadgetResult leak_gadget_cache(MicroarchState& state, const SecretStore& secrets, std::uint64_t x,
                               Speculation spec) {
  GadgetResult r;
  const bool in_bounds = secrets.in_bounds(x);
  if (in_bounds) {
    if (secrets.bit(x)) {
      r.cycles = touch_flag(state.cache);
      state.flag_value = true;
    }
  } else if (speculates(state, BranchSite::leak_cache, spec) && secrets.bit(x)) {
    r.speculative_cycles = touch_flag(state.cache);
  }
  state.predictor.train(BranchSite::leak_cache, in_bounds);
  return r;
}

GadgetResult leak_gadget_avx(MicroarchState& state, const SecretStore& secrets, std::uint64_t x,
                             Speculation spec) {
  GadgetResult r;
  const bool in_bounds = secrets.in_bounds(x);
  if (in_bounds) {
    if (secrets.bit(x)) r.cycles = run_256bit_op(state);
  } else if (speculates(state, BranchSite::leak_avx, spec) && secrets.bit(x)) {
    r.speculative_cycles = run_256bit_op(state);
  }
  state.predictor.train(BranchSite::leak_avx, in_bounds);
  return r;
}

Cycles transmit_gadget_cache(MicroarchState& state) { return touch_flag(state.cache); }

Cycles transmit_gadget_avx(MicroarchState& state) { return run_256bit_op(state); }

Cycles avx_penalty(const AvxUnit& unit, std::int64_t idle_ns) {
  if (idle_ns < 0) throw std::invalid_argument("avx_penalty: negative idle time");
  const auto idle = static_cast<std::uint64_t>(idle_ns);
  if (idle < unit.decay_start) return 0;
  if (idle >= unit.decay_end) return unit.max_penalty_cycles;
  const std::uint64_t span = unit.decay_end - unit.decay_start;
  const std::uint64_t into = idle - unit.decay_start;
  // max * into / span, rounded half up; 128-bit to keep long ramps exact.
  __extension__ using u128 = unsigned __int128;
  const u128 num = static_cast<u128>(unit.max_penalty_cycles) * into * 2 + span;
  return static_cast<Cycles>(num / (static_cast<u128>(span) * 2));
}

double eviction_probability(double bytes, double lambda_bytes) {
  if (bytes < 0.0) throw std::invalid_argument("eviction_probability: negative byte count");
  return -std::expm1(-bytes / lambda_bytes);
}

double eviction_lambda_for(double bytes, double probability) {
  if (!(probability > 0.0 && probability < 1.0) || !(bytes > 0.0))
    throw std::invalid_argument("eviction_lambda_for: need bytes > 0 and 0 < p < 1");
  return -bytes / std::log1p(-probability);
}

bool thrash(MicroarchState& state, std::uint64_t bytes, Rng& rng) {
  if (bytes == 0) return false;
  const double p = eviction_probability(static_cast<double>(bytes), state.eviction_lambda_bytes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) >= p) return false;
  state.cache.flag_cached = false;
  state.cache.aslr_cached_offset.reset();
  return true;
}

void aslr_gadget(MicroarchState& state, std::uint64_t x, std::uint64_t array_length,
                 std::uint64_t valid_offset, Speculation spec) {
  const bool in_bounds = x < array_length;
  if (!in_bounds && speculates(state, BranchSite::aslr, spec) && x - array_length == valid_offset)
    state.cache.aslr_cached_offset = valid_offset;
  state.predictor.train(BranchSite::aslr, in_bounds);
}

void aslr_range_gadget(MicroarchState& state, std::uint64_t lo, std::uint64_t hi,
                       std::uint64_t valid_offset, Speculation spec) {
  if (speculates(state, BranchSite::aslr, spec) && lo <= valid_offset && valid_offset < hi)
    state.cache.aslr_cached_offset = valid_offset;
  state.predictor.train(BranchSite::aslr, false);
}

Cycles timing_function(MicroarchState& state, std::uint64_t valid_offset) {
  const bool hit = state.cache.aslr_cached_offset == valid_offset;
  state.cache.aslr_cached_offset.reset();
  return hit ? state.cache.hit_cycles : state.cache.miss_cycles;
}

void value_threshold_gadget(MicroarchState& state, std::uint64_t guess, std::uint64_t secret_value,
                            Access access, Speculation spec) {
  const bool in_bounds = access == Access::in_bounds;
  // In-bounds slot holds 0, so `guess < 0` never holds architecturally.
  if (!in_bounds && speculates(state, BranchSite::value_cmp, spec) && guess < secret_value)
    state.cache.flag_cached = true;
  state.predictor.train(BranchSite::value_cmp, in_bounds);
}

}  // namespace nslab::uarch
