#pragma once

// Flat "key = value" configuration with [sections]:
//
//   [victim]    secret_text | secret_hex, public_bits, valid_aslr_offset,
//               aslr_space_bits, secret_value, mitigation_barrier,
//               mitigation_noise_sigma_ns, clock, handler_cycles,
//               request_tick_ns, trace
//   [latency]   preset, base_ns, sigma_ns, shape
//   [uarch]     cycle_time_ns, hit_cycles, miss_cycles, avx_warm_cycles,
//               avx_max_penalty_cycles, avx_decay_start_ns,
//               avx_decay_end_ns, eviction_lambda_bytes
//   [net]       port, bind, timeout_ms
//   [dispatch]  enabled = comma-separated opcode names or hex codes
//
// '#' and ';' start comments. Integers accept a 0x prefix.

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "nslab/udp.hpp"
#include "nslab/victim.hpp"

namespace nslab::config {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LabConfig {
  victim::VictimConfig victim;
  std::uint16_t port = udp::kDefaultPort;
  std::string bind_address = "127.0.0.1";
  std::chrono::milliseconds timeout{1000};
  std::string trace_path;  // empty: no request log
};

/// Starts from the defaults and applies every key. Throws ConfigError with
/// "<source>:<line>: ..." on unknown sections/keys, bad values or a config
/// that fails validation.
LabConfig parse(std::istream& in, const std::string& source = "<config>");
LabConfig load(const std::string& path);

/// Writes the effective configuration in the same format parse() reads.
void print_effective(std::ostream& out, const LabConfig& cfg);

}  // namespace nslab::config
