#include <doctest.h>

#include <sstream>

#include "nslab/config.hpp"

using namespace nslab;

namespace {

config::LabConfig parse_text(const std::string& text) {
  std::istringstream in(text);
  return config::parse(in, "test.conf");
}

std::string error_of(const std::string& text) {
  try {
    parse_text(text);
  } catch (const config::ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty config yields the defaults") {
  const auto c = parse_text("");
  const victim::VictimConfig d;
  CHECK(c.victim.secrets == d.secrets);
  CHECK(c.victim.valid_aslr_offset == d.valid_aslr_offset);
  CHECK(c.victim.enabled_opcodes == victim::kAllOpcodes);
  CHECK(c.port == udp::kDefaultPort);
  CHECK(c.timeout.count() == 1000);
}

TEST_CASE("keys in every section") {
  const auto c = parse_text(R"(
# comment
[victim]
secret_text = d          ; trailing comment
public_bits = 16
valid_aslr_offset = 0x1F
aslr_space_bits = 8
secret_value = 1234
mitigation_barrier = true
mitigation_noise_sigma_ns = 156000
clock = wall
handler_cycles = 500
request_tick_ns = 2000
trace = /tmp/trace.log

[latency]
preset = cloud
shape = lognormal

[uarch]
cycle_time_ns = 0.25
hit_cycles = 30
miss_cycles = 300
eviction_lambda_bytes = 1e5

[net]
port = 5555
bind = 0.0.0.0
timeout_ms = 250

[dispatch]
enabled = LEAK_CACHE, 0x03, RESET
)");
  const auto& v = c.victim;
  CHECK(v.secrets.bitstream_length() == 16);
  CHECK(v.secrets.bit(17));  // 'd' = 0110 0100
  CHECK(v.valid_aslr_offset == 0x1F);
  CHECK(v.aslr_space_bits == 8);
  CHECK(v.secret_value == 1234);
  CHECK(v.mitigation_barrier);
  CHECK(v.mitigation_noise_sigma_ns == 156000.0);
  CHECK(v.clock_mode == victim::ClockMode::wall);
  CHECK(v.handler_cycles == 500);
  CHECK(v.request_tick_ns == 2000);
  CHECK(c.trace_path == "/tmp/trace.log");
  CHECK(v.latency.sigma_ns == 52'300.0);
  CHECK(v.latency.shape == wire::NoiseShape::lognormal);
  CHECK(v.uarch.cycle_time_ns == 0.25);
  CHECK(v.uarch.miss_cycles == 300);
  CHECK(v.uarch.eviction_lambda_bytes == 1e5);
  CHECK(c.port == 5555);
  CHECK(c.bind_address == "0.0.0.0");
  CHECK(c.timeout.count() == 250);
  CHECK(v.opcode_enabled(wire::Opcode::leak_cache));
  CHECK(v.opcode_enabled(wire::Opcode::transmit_cache));
  CHECK(v.opcode_enabled(wire::Opcode::reset));
  CHECK_FALSE(v.opcode_enabled(wire::Opcode::download));
}

TEST_CASE("effective config round-trips") {
  const auto c = parse_text("[victim]\nsecret_hex = 00ff10\nsecret_value = 9\n[latency]\npreset = arm\nsigma_ns = 1.5\n"
                            "[dispatch]\nenabled = LEAK_AVX, TRANSMIT_AVX\n");
  std::ostringstream printed;
  config::print_effective(printed, c);
  const auto again = parse_text(printed.str());
  std::ostringstream reprinted;
  config::print_effective(reprinted, again);
  CHECK(printed.str() == reprinted.str());
  CHECK(again.victim.secrets == c.victim.secrets);
  CHECK(again.victim.latency.sigma_ns == 1.5);
  CHECK(again.victim.latency.base_ns == c.victim.latency.base_ns);
  CHECK(again.victim.enabled_opcodes == c.victim.enabled_opcodes);
  CHECK(printed.str().find("secret_hex = 00ff10") != std::string::npos);
}

TEST_CASE("errors carry the source line") {
  CHECK(error_of("[victim]\nbogus = 1\n") == "test.conf:2: unknown key 'bogus' in [victim]");
  CHECK(error_of("[nope]\n").find("test.conf:1: unknown section") == 0);
  CHECK(error_of("[dispatch]\nenabled = LEAK_CACHE, FLY\n") ==
        "test.conf:2: dispatch table names unknown opcode 'FLY'");
  CHECK(error_of("[dispatch]\nenabled = 0x0B\n").find("unknown opcode") != std::string::npos);
  CHECK(error_of("[victim]\nsecret_value = -3\n").find("expected an unsigned integer") != std::string::npos);
  CHECK(error_of("[uarch]\ncycle_time_ns = fast\n").find("expected a number") != std::string::npos);
  CHECK(error_of("key = 1\n").find("outside of a section") != std::string::npos);
  CHECK(error_of("[victim]\nclock = sundial\n").find("clock") != std::string::npos);
  CHECK(error_of("[latency]\npreset = lan\n").find("unknown latency preset") != std::string::npos);
  CHECK(error_of("[victim]\naslr_space_bits = 4\nvalid_aslr_offset = 16\n").find("valid_aslr_offset") !=
        std::string::npos);
  CHECK(error_of("[net]\nport = 70000\n").find("port") != std::string::npos);
  CHECK_THROWS_AS(config::load("/nonexistent/nslab.conf"), config::ConfigError);
}
