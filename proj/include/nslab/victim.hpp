#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <random>

#include "nslab/uarch.hpp"
#include "nslab/wire.hpp"

namespace nslab::victim {

enum class ClockMode : std::uint8_t { virtual_clock, wall };

inline constexpr std::uint32_t kAllOpcodes = ((1u << (wire::kMaxOpcode + 1)) - 1) & ~1u;

struct VictimConfig {
  uarch::SecretStore secrets = default_secrets();
  std::uint64_t valid_aslr_offset = 0x5A3C7;
  unsigned aslr_space_bits = 20;
  std::uint64_t secret_value = 42;  // target of VALUE_CMP
  bool mitigation_barrier = false;
  double mitigation_noise_sigma_ns = 0.0;
  wire::LatencyModel latency = wire::LatencyModel::noiseless();
  uarch::UarchParams uarch;
  ClockMode clock_mode = ClockMode::virtual_clock;
  uarch::Cycles handler_cycles = 1000;
  uarch::Nanos request_tick_ns = 1000;
  std::uint32_t enabled_opcodes = kAllOpcodes;  // bit i enables opcode i

  std::uint64_t array_length() const noexcept { return secrets.bitstream_length(); }
  bool opcode_enabled(wire::Opcode op) const noexcept {
    return (enabled_opcodes >> static_cast<unsigned>(op)) & 1u;
  }
  // Throws std::invalid_argument.
  void validate() const;

  /// 64 public zero bits followed by the 8-byte text "Spectre!".
  static uarch::SecretStore default_secrets();
};

/// Dispatches one request against the microarchitectural state. In virtual
/// clock mode every request first advances the clock by request_tick_ns.
wire::Handled handle_request(uarch::MicroarchState& state, const VictimConfig& config,
                             const wire::RequestPacket& request, uarch::Rng& rng);

struct OpcodeCounters {
  std::array<std::uint64_t, wire::kMaxOpcode + 1> by_opcode{};
  std::uint64_t rejected = 0;  // answered with a non-OK status or malformed

  std::uint64_t total() const noexcept;
  std::uint64_t of(wire::Opcode op) const noexcept { return by_opcode[static_cast<std::size_t>(op)]; }
};

/// The attackable service: owns one MicroarchState and serialises all
/// requests against it.
class Victim final : public wire::Endpoint {
 public:
  explicit Victim(VictimConfig config, std::uint64_t seed = 1);

  wire::Handled handle(const wire::RequestPacket& request) override;
  /// Artificial-noise mitigation: Gaussian server-side delay.
  double server_delay_ns() override;
  double cycle_time_ns() const override { return state_.cycle_time_ns; }

  void on_malformed() override { ++counters_.rejected; }

  /// Append one line per request (opcode, arg, server_cycles, status).
  void set_trace(std::ostream* out) noexcept { trace_ = out; }

  const OpcodeCounters& counters() const noexcept { return counters_; }
  const VictimConfig& config() const noexcept { return config_; }
  const uarch::MicroarchState& state() const noexcept { return state_; }
  uarch::MicroarchState& state() noexcept { return state_; }

 private:
  VictimConfig config_;
  uarch::MicroarchState state_;
  uarch::Rng rng_;
  std::mt19937_64 noise_rng_;
  OpcodeCounters counters_;
  std::ostream* trace_ = nullptr;
  std::chrono::steady_clock::time_point started_;
};

}  // namespace nslab::victim
