#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "nslab/uarch.hpp"

using namespace nslab::uarch;

namespace {

// Reference 2-bit counter, written out longhand.
struct OracleCounter {
  int v = 0;
  void step(bool taken) {
    if (taken && v < 3) v = v + 1;
    if (!taken && v > 0) v = v - 1;
  }
  bool taken() const { return v == 2 || v == 3; }
};

SecretStore store_with(std::uint8_t secret_byte) {
  const std::uint8_t b = secret_byte;
  return SecretStore::with_secret(64, std::span(&b, 1));
}

void mistrain_cache(MicroarchState& s, const SecretStore& secrets, int times = 10) {
  for (int i = 0; i < times; ++i) leak_gadget_cache(s, secrets, static_cast<std::uint64_t>(i % 64));
}

}  // namespace

TEST_CASE("branch predictor matches a brute-force oracle over all short sequences") {
  constexpr BranchSite sites[] = {BranchSite::leak_cache, BranchSite::aslr};
  for (int k = 1; k <= 7; ++k) {
    int total = 1;
    for (int i = 0; i < k; ++i) total *= 4;
    for (int code = 0; code < total; ++code) {
      BranchPredictor p;
      std::array<OracleCounter, 2> oracle{};
      int c = code;
      for (int step = 0; step < k; ++step, c /= 4) {
        const int site = (c % 4) / 2;
        const bool taken = (c % 2) == 1;
        p.train(sites[site], taken);
        oracle[static_cast<std::size_t>(site)].step(taken);
        for (int s = 0; s < 2; ++s) {
          REQUIRE(p.predict(sites[s]) == oracle[static_cast<std::size_t>(s)].taken());
          REQUIRE(p.counter(sites[s]) == oracle[static_cast<std::size_t>(s)].v);
        }
        REQUIRE(p.counter(BranchSite::leak_avx) == 0);
        REQUIRE(p.counter(BranchSite::value_cmp) == 0);
      }
    }
  }
}

TEST_CASE("virtual clock never runs backwards") {
  VirtualClock c;
  c.advance(10);
  CHECK(c.now() == 10);
  CHECK_THROWS_AS(c.advance(-1), std::invalid_argument);
  c.advance_to(25);
  CHECK(c.now() == 25);
  CHECK_THROWS_AS(c.advance_to(24), std::invalid_argument);
  CHECK(c.now() == 25);
}

TEST_CASE("secret store is MSB-first and wraps") {
  const auto s = store_with('d');  // 0110 0100
  CHECK(s.bitstream_length() == 64);
  CHECK(s.secret_offset() == 64);
  const int expect[] = {0, 1, 1, 0, 0, 1, 0, 0};
  for (int i = 0; i < 8; ++i) CHECK(s.bit(64 + static_cast<std::uint64_t>(i)) == (expect[i] == 1));
  for (std::uint64_t i = 0; i < 64; ++i) CHECK_FALSE(s.bit(i));
  CHECK(s.bit(72 + 65) == s.bit(65));
  const auto odd = SecretStore::with_secret(13, std::vector<std::uint8_t>{0x80});
  CHECK(odd.secret_offset() == 16);
  CHECK(odd.bit(16));
  CHECK_THROWS(SecretStore(std::vector<std::uint8_t>{0}, 9));
}

TEST_CASE("cache leak gadget: mistraining enables the speculative access") {
  const auto secrets = store_with(0xFF);
  MicroarchState s;

  SUBCASE("untrained predictor does not speculate") {
    const auto r = leak_gadget_cache(s, secrets, 64);
    CHECK(r.cycles == 0);
    CHECK(r.speculative_cycles == 0);
    CHECK_FALSE(s.cache.flag_cached);
  }
  SUBCASE("two in-bounds calls train the branch taken") {
    mistrain_cache(s, secrets, 2);
    CHECK(s.predictor.predict(BranchSite::leak_cache));
    const auto r = leak_gadget_cache(s, secrets, 64);
    CHECK(r.cycles == 0);
    CHECK(r.speculative_cycles == s.cache.miss_cycles);
    CHECK(s.cache.flag_cached);
    CHECK_FALSE(s.flag_value);
  }
  SUBCASE("a 0-bit leaves the flag uncached") {
    const auto zero = store_with(0x00);
    mistrain_cache(s, zero);
    leak_gadget_cache(s, zero, 64);
    CHECK_FALSE(s.cache.flag_cached);
  }
  SUBCASE("transmit cost differs by the hit/miss delta") {
    const Cycles miss = transmit_gadget_cache(s);
    const Cycles hit = transmit_gadget_cache(s);
    CHECK(miss - hit == 160);
    CHECK(s.cache.delta() == 160);
  }
}

TEST_CASE("speculation barrier gates every side effect") {
  const auto secrets = store_with(0xFF);
  for (int gadget = 0; gadget < 4; ++gadget) {
    MicroarchState s;
    mistrain_cache(s, secrets);
    for (int i = 0; i < 10; ++i) {
      leak_gadget_avx(s, secrets, static_cast<std::uint64_t>(i));
      aslr_gadget(s, static_cast<std::uint64_t>(i), 64, 7);
      value_threshold_gadget(s, 0, 100, Access::in_bounds);
    }
    s.clock.advance(2'000'000);
    MicroarchState expected = s;
    switch (gadget) {
      case 0:
        CHECK(leak_gadget_cache(s, secrets, 64, Speculation::barrier).speculative_cycles == 0);
        expected.predictor.train(BranchSite::leak_cache, false);
        break;
      case 1:
        CHECK(leak_gadget_avx(s, secrets, 64, Speculation::barrier).speculative_cycles == 0);
        expected.predictor.train(BranchSite::leak_avx, false);
        break;
      case 2:
        aslr_range_gadget(s, 0, 1u << 20, 7, Speculation::barrier);
        expected.predictor.train(BranchSite::aslr, false);
        break;
      case 3:
        value_threshold_gadget(s, 1, 100, Access::out_of_bounds, Speculation::barrier);
        expected.predictor.train(BranchSite::value_cmp, false);
        break;
    }
    CHECK(s == expected);
  }
}

TEST_CASE("AVX penalty curve") {
  const AvxUnit u;
  CHECK(avx_penalty(u, 0) == 0);
  CHECK(avx_penalty(u, 499'999) == 0);
  CHECK(avx_penalty(u, 500'000) == 0);
  CHECK(avx_penalty(u, 750'000) == 183);
  CHECK(avx_penalty(u, 1'000'000) == 366);
  CHECK(avx_penalty(u, 50'000'000) == 366);
  CHECK(avx_penalty(u, INT64_MAX) == 366);
  CHECK_THROWS_AS(avx_penalty(u, -1), std::invalid_argument);

  Cycles prev = 0;
  for (std::int64_t t = 0; t <= 1'200'000; ++t) {
    const Cycles p = avx_penalty(u, t);
    const double into = static_cast<double>(t) - 500'000.0;
    const long oracle = t < 500'000 ? 0 : t >= 1'000'000 ? 366 : std::lround(366.0 * into / 500'000.0);
    REQUIRE(static_cast<long>(p) == oracle);
    REQUIRE(p >= prev);
    REQUIRE(p - prev <= 1);
    prev = p;
  }
}

TEST_CASE("AVX transmit: warm 210, cold 576") {
  MicroarchState s;
  CHECK(transmit_gadget_avx(s) == 576);  // never used
  s.clock.advance(1000);
  CHECK(transmit_gadget_avx(s) == 210);
  s.clock.advance(1'000'000);
  CHECK(transmit_gadget_avx(s) == 576);
  CHECK(576 - 210 == 366);

  const auto secrets = store_with(0x80);
  for (int i = 0; i < 10; ++i) leak_gadget_avx(s, secrets, static_cast<std::uint64_t>(i));
  s.clock.advance(1'000'000);
  const auto r = leak_gadget_avx(s, secrets, 64);
  CHECK(r.cycles == 0);
  CHECK(r.speculative_cycles == 576);
  s.clock.advance(1000);
  CHECK(transmit_gadget_avx(s) == 210);
}

TEST_CASE("eviction model") {
  const UarchParams p;
  CHECK(eviction_probability(590'000, p.eviction_lambda_bytes) >= 0.99);
  CHECK(eviction_probability(0, p.eviction_lambda_bytes) == 0.0);
  double prev = -1.0;
  for (double b = 0; b <= 2e6; b += 1000) {
    const double q = eviction_probability(b, p.eviction_lambda_bytes);
    CHECK(q >= prev);
    CHECK(q <= 1.0);
    prev = q;
  }
  const double lambda = eviction_lambda_for(590'000, 0.99);
  CHECK(eviction_probability(590'000, lambda) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK_THROWS(eviction_probability(-1, 1.0));
  CHECK_THROWS(eviction_lambda_for(590'000, 1.0));
}

TEST_CASE("empirical eviction frequency tracks the model") {
  Rng rng(7);
  const UarchParams p;
  for (std::uint64_t bytes : {50'000ull, 100'000ull, 200'000ull, 400'000ull, 590'000ull}) {
    int evicted = 0;
    for (int t = 0; t < 10'000; ++t) {
      MicroarchState s(p);
      s.cache.flag_cached = true;
      s.cache.aslr_cached_offset = 3;
      const bool e = thrash(s, bytes, rng);
      CHECK(e == !s.cache.flag_cached);
      CHECK(e == !s.cache.aslr_cached_offset.has_value());
      evicted += e;
    }
    const double model = eviction_probability(static_cast<double>(bytes), p.eviction_lambda_bytes);
    CHECK(std::abs(evicted / 1e4 - model) <= 0.02);
  }
  MicroarchState s;
  s.cache.flag_cached = true;
  for (int i = 0; i < 1000; ++i) CHECK_FALSE(thrash(s, 0, rng));
  CHECK(s.cache.flag_cached);
}

TEST_CASE("thrash is deterministic for a seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    MicroarchState x, y;
    x.cache.flag_cached = y.cache.flag_cached = true;
    CHECK(thrash(x, 100'000, a) == thrash(y, 100'000, b));
  }
}

TEST_CASE("ASLR gadgets and timing function") {
  MicroarchState s;
  const std::uint64_t valid = 0x5A3C7;
  CHECK(timing_function(s, valid) == s.cache.miss_cycles);

  aslr_range_gadget(s, 0, 1u << 20, valid);  // untrained
  CHECK(timing_function(s, valid) == s.cache.miss_cycles);

  for (std::uint64_t i = 0; i < 10; ++i) aslr_gadget(s, i, 64, valid);
  aslr_range_gadget(s, 0, 1u << 20, valid);
  CHECK(timing_function(s, valid) == s.cache.hit_cycles);
  CHECK(timing_function(s, valid) == s.cache.miss_cycles);  // read resets the line

  for (std::uint64_t i = 0; i < 10; ++i) aslr_gadget(s, i, 64, valid);
  aslr_range_gadget(s, 0, valid, valid);  // valid offset excluded
  CHECK(timing_function(s, valid) == s.cache.miss_cycles);

  for (std::uint64_t i = 0; i < 10; ++i) aslr_gadget(s, i, 64, valid);
  aslr_gadget(s, 64 + valid, 64, valid);
  CHECK(timing_function(s, valid) == s.cache.hit_cycles);

  for (std::uint64_t i = 0; i < 10; ++i) aslr_gadget(s, i, 64, valid);
  aslr_gadget(s, 64 + valid + 1, 64, valid);
  CHECK(timing_function(s, valid) == s.cache.miss_cycles);
}

TEST_CASE("value-threshold gadget caches iff guess < secret under speculation") {
  for (std::uint64_t secret : {0ull, 1ull, 42ull, 65535ull}) {
    for (std::uint64_t guess : {0ull, 1ull, 41ull, 42ull, 43ull, 65534ull, 65535ull}) {
      MicroarchState s;
      for (int i = 0; i < 10; ++i) value_threshold_gadget(s, static_cast<std::uint64_t>(i), secret, Access::in_bounds);
      CHECK_FALSE(s.cache.flag_cached);
      value_threshold_gadget(s, guess, secret, Access::out_of_bounds);
      CHECK(s.cache.flag_cached == (guess < secret));
    }
  }
}

TEST_CASE("leak gadget architectural cost is independent of the secret") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = store_with(static_cast<std::uint8_t>(rng()));
    const auto b = store_with(static_cast<std::uint8_t>(rng()));
    MicroarchState sa, sb;
    for (int step = 0; step < 200; ++step) {
      const std::uint64_t x = rng() % 80;
      const bool avx = rng() & 1;
      const auto ra = avx ? leak_gadget_avx(sa, a, x) : leak_gadget_cache(sa, a, x);
      const auto rb = avx ? leak_gadget_avx(sb, b, x) : leak_gadget_cache(sb, b, x);
      REQUIRE(ra.cycles == rb.cycles);
      sa.clock.advance(static_cast<std::int64_t>(rng() % 2'000'000));
      sb.clock.advance_to(sa.clock.now());
    }
  }
}

TEST_CASE("parameter validation") {
  UarchParams p;
  p.miss_cycles = p.hit_cycles;
  CHECK_THROWS_AS(MicroarchState{p}, std::invalid_argument);
  p = {};
  p.cycle_time_ns = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.avx_decay_end_ns = p.avx_decay_start_ns;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
