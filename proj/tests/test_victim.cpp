#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "nslab/victim.hpp"

using namespace nslab;
using wire::Opcode;
using wire::Status;

namespace {

wire::Handled call(victim::Victim& v, Opcode op, std::uint64_t arg = 0) {
  static std::uint64_t nonce = 0;
  return v.handle({op, arg, ++nonce});
}

victim::VictimConfig with_secret(std::uint8_t byte) {
  victim::VictimConfig c;
  const std::uint8_t b = byte;
  c.secrets = uarch::SecretStore::with_secret(64, std::span(&b, 1));
  return c;
}

}  // namespace

TEST_CASE("transmit cache: cached vs uncached differ by exactly 160 cycles") {
  victim::Victim v{victim::VictimConfig{}};
  const auto miss = call(v, Opcode::transmit_cache).server_cycles;
  const auto hit = call(v, Opcode::transmit_cache).server_cycles;
  CHECK(miss - hit == 160);
  CHECK(hit == 1000 + 40);
}

TEST_CASE("mistrained LEAK_AVX of a 1-bit warms the unit") {
  victim::Victim v{with_secret(0x80)};
  for (std::uint64_t i = 0; i < 10; ++i) CHECK(call(v, Opcode::leak_avx, i).server_cycles == 1000);
  CHECK(call(v, Opcode::advance_clock, 2'000'000).response.status == Status::ok);
  CHECK(call(v, Opcode::leak_avx, 64).server_cycles == 1000);
  CHECK(call(v, Opcode::transmit_avx).server_cycles == 1000 + 210);

  victim::Victim z{with_secret(0x00)};
  for (std::uint64_t i = 0; i < 10; ++i) call(z, Opcode::leak_avx, i);
  call(z, Opcode::advance_clock, 2'000'000);
  call(z, Opcode::leak_avx, 64);
  CHECK(call(z, Opcode::transmit_avx).server_cycles == 1000 + 576);
}

TEST_CASE("barrier: out-of-bounds LEAK_CACHE never caches the flag") {
  auto cfg = with_secret(0xFF);
  cfg.mitigation_barrier = true;
  victim::Victim v{cfg};
  bool ever = false;
  for (int k = 0; k < 1'000'000; ++k) {
    if (k % 100 == 0)
      for (std::uint64_t i = 0; i < 10; ++i) call(v, Opcode::leak_cache, i);
    call(v, Opcode::leak_cache, 64 + static_cast<std::uint64_t>(k % 8));
    ever = ever || v.state().cache.flag_cached;
  }
  CHECK_FALSE(ever);
}

TEST_CASE("DOWNLOAD and ADVANCE_CLOCK never set cached state") {
  victim::Victim v{victim::VictimConfig{}};
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10'000; ++i) {
    if (rng() & 1)
      call(v, Opcode::download, rng() % 2'000'000);
    else
      call(v, Opcode::advance_clock, rng() % 3'000'000);
    REQUIRE_FALSE(v.state().cache.flag_cached);
    REQUIRE_FALSE(v.state().cache.aslr_cached_offset.has_value());
  }
}

TEST_CASE("LEAK_* timing does not depend on the secret") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    victim::Victim a{with_secret(static_cast<std::uint8_t>(rng()))};
    victim::Victim b{with_secret(static_cast<std::uint8_t>(rng()))};
    for (int i = 0; i < 5000; ++i) {
      const Opcode op = (rng() & 1) ? Opcode::leak_cache : Opcode::leak_avx;
      const std::uint64_t x = rng() % 100;
      REQUIRE(call(a, op, x).server_cycles == call(b, op, x).server_cycles);
      if (rng() % 50 == 0) {
        const auto t = rng() % 2'000'000;
        call(a, Opcode::advance_clock, t);
        call(b, Opcode::advance_clock, t);
      }
    }
  }
}

TEST_CASE("with the barrier, full traces are identical for secret 0 and 1") {
  auto c0 = with_secret(0x00), c1 = with_secret(0xFF);
  c0.mitigation_barrier = c1.mitigation_barrier = true;
  victim::Victim a{c0, 5}, b{c1, 5};
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20'000; ++i) {
    const auto op = static_cast<Opcode>(1 + rng() % 8);
    std::uint64_t arg = rng() % 128;
    if (op == Opcode::download) arg = 590'000;
    const auto ha = call(a, op, arg), hb = call(b, op, arg);
    REQUIRE(ha.server_cycles == hb.server_cycles);
    REQUIRE(ha.response.payload == hb.response.payload);
  }
  CHECK(a.state() == b.state());
}

TEST_CASE("status codes") {
  victim::VictimConfig cfg;
  cfg.enabled_opcodes &= ~(1u << static_cast<unsigned>(Opcode::download));
  victim::Victim v{cfg};
  CHECK(call(v, static_cast<Opcode>(0x0B)).response.status == Status::bad_opcode);
  CHECK(call(v, Opcode::download, 10).response.status == Status::bad_opcode);
  CHECK(call(v, Opcode::aslr_probe, wire::pack_range(5, 5)).response.status == Status::bad_arg);
  CHECK(call(v, Opcode::aslr_probe, wire::pack_range(0, (1u << 20) + 1)).response.status == Status::bad_arg);
  CHECK(call(v, Opcode::aslr_probe, wire::pack_range(0, 1u << 20)).response.status == Status::ok);
  CHECK(v.counters().rejected == 4);
  CHECK(v.counters().total() == 1);

  victim::VictimConfig wall;
  wall.clock_mode = victim::ClockMode::wall;
  victim::Victim w{wall};
  CHECK(call(w, Opcode::advance_clock, 10).response.status == Status::bad_arg);
}

TEST_CASE("virtual clock ticks per request; RESET keeps the clock") {
  victim::Victim v{victim::VictimConfig{}};
  call(v, Opcode::transmit_cache);
  CHECK(v.state().clock.now() == 1000);
  const auto r = call(v, Opcode::advance_clock, 5000);
  CHECK(r.response.payload == 7000);
  for (std::uint64_t i = 0; i < 10; ++i) call(v, Opcode::leak_cache, i);
  CHECK(v.state().cache.flag_cached);
  call(v, Opcode::reset);
  CHECK(v.state().clock.now() == 18'000);
  CHECK_FALSE(v.state().cache.flag_cached);
  CHECK(v.state().predictor.counter(uarch::BranchSite::leak_cache) == 0);
}

TEST_CASE("wall-clock mode: the AVX unit decays in real time") {
  victim::VictimConfig cfg;
  cfg.clock_mode = victim::ClockMode::wall;
  victim::Victim v{cfg};
  call(v, Opcode::transmit_avx);
  CHECK(call(v, Opcode::transmit_avx).server_cycles == 1000 + 210);
  std::this_thread::sleep_for(std::chrono::milliseconds(2));
  CHECK(call(v, Opcode::transmit_avx).server_cycles == 1000 + 576);
}

TEST_CASE("artificial noise mitigation: server-side Gaussian delay") {
  victim::VictimConfig cfg;
  victim::Victim quiet{cfg};
  CHECK(quiet.server_delay_ns() == 0.0);
  cfg.mitigation_noise_sigma_ns = 156'000.0;
  victim::Victim v{cfg, 3};
  const int n = 100'000;
  double sum = 0, sq = 0;
  std::vector<double> xs(n);
  for (auto& x : xs) sum += (x = v.server_delay_ns());
  const double mean = sum / n;
  for (double x : xs) sq += (x - mean) * (x - mean);
  CHECK(std::abs(std::sqrt(sq / (n - 1)) / 156'000.0 - 1.0) < 0.02);
}

TEST_CASE("trace lines") {
  victim::Victim v{victim::VictimConfig{}};
  std::ostringstream log;
  v.set_trace(&log);
  v.handle({Opcode::transmit_cache, 0, 1});
  v.handle({static_cast<Opcode>(0x0C), 3, 2});
  CHECK(log.str() ==
        "opcode=TRANSMIT_CACHE arg=0 server_cycles=1200 status=0\n"
        "opcode=UNKNOWN arg=3 server_cycles=1000 status=1\n");
}

TEST_CASE("config validation") {
  victim::VictimConfig c;
  c.valid_aslr_offset = 1u << 20;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.mitigation_noise_sigma_ns = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.aslr_space_bits = 32;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.enabled_opcodes |= 1u << 12;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_NOTHROW(victim::VictimConfig{}.validate());
}
