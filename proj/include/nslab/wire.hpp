#pragma once

// Fixed 17-byte request/response frames, the latency noise model, and the
// transport abstraction shared by the in-process loopback and UDP.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

namespace nslab::wire {

enum class Opcode : std::uint8_t {
  leak_cache = 0x01,
  leak_avx = 0x02,
  transmit_cache = 0x03,
  transmit_avx = 0x04,
  download = 0x05,
  aslr_probe = 0x06,
  timing_fn = 0x07,
  value_cmp = 0x08,
  advance_clock = 0x09,
  reset = 0x0A,
};
inline constexpr std::uint8_t kMaxOpcode = 0x0A;

constexpr bool is_known_opcode(std::uint8_t raw) noexcept { return raw >= 0x01 && raw <= kMaxOpcode; }
std::string_view to_string(Opcode op) noexcept;
/// Accepts wire names ("LEAK_CACHE") or hex ("0x01").
std::optional<Opcode> parse_opcode(std::string_view text);

enum class Status : std::uint8_t { ok = 0x00, bad_opcode = 0x01, bad_arg = 0x02 };

inline constexpr std::size_t kFrameSize = 17;
using Frame = std::array<std::uint8_t, kFrameSize>;

struct RequestPacket {
  Opcode opcode = Opcode::reset;
  std::uint64_t arg = 0;
  std::uint64_t nonce = 0;
  bool operator==(const RequestPacket&) const = default;
};

struct ResponsePacket {
  Status status = Status::ok;
  std::uint64_t nonce = 0;
  std::uint64_t payload = 0;
  bool operator==(const ResponsePacket&) const = default;
};

enum class DecodeErrc { length_mismatch, unknown_opcode, unknown_status };

struct DecodeError {
  DecodeErrc code;
  std::optional<std::uint64_t> nonce;  // recovered whenever the frame had 17 bytes
};

template <class T>
using Decoded = std::variant<T, DecodeError>;

Frame encode(const RequestPacket& p) noexcept;
Frame encode(const ResponsePacket& p) noexcept;
Decoded<RequestPacket> decode_request(std::span<const std::uint8_t> bytes) noexcept;
Decoded<ResponsePacket> decode_response(std::span<const std::uint8_t> bytes) noexcept;

// Bit 63 of an ASLR_PROBE / VALUE_CMP argument selects the out-of-bounds form.
inline constexpr std::uint64_t kOutOfBoundsFlag = 1ull << 63;

struct ProbeRange {
  std::uint32_t lo = 0;
  std::uint32_t mid = 0;
};

/// ASLR_PROBE argument covering offsets [lo, mid). lo must fit in 31 bits.
std::uint64_t pack_range(std::uint32_t lo, std::uint32_t mid);
std::optional<ProbeRange> unpack_range(std::uint64_t arg) noexcept;

enum class NoiseShape : std::uint8_t { gaussian, lognormal };

struct LatencyModel {
  std::string preset = "none";
  double base_ns = 100'000.0;  // one-way
  double sigma_ns = 0.0;
  NoiseShape shape = NoiseShape::gaussian;

  static LatencyModel local();  // σ = 15.6 µs
  static LatencyModel cloud();  // σ = 52.3 µs
  static LatencyModel arm();    // σ = 128.5 µs
  static LatencyModel noiseless(double base_ns = 100'000.0);
  /// "local", "cloud", "arm" or "none"; throws std::invalid_argument otherwise.
  static LatencyModel from_preset(std::string_view name);

  void validate() const;
  /// Zero-mean noise with standard deviation sigma_ns.
  double sample_noise(std::mt19937_64& rng) const;
};

struct Sample {
  double rtt_ns = 0.0;
  std::uint64_t sequence = 0;
};

/// Round-trip time of the loopback model: 2·base + cycles·cycle_time + noise, clamped at 0.
double compose_rtt(const LatencyModel& latency, std::uint64_t server_cycles, double cycle_time_ns,
                   double noise_ns) noexcept;

/// One noisy loopback round trip for a request that cost `server_cycles` on the server.
Sample send_request(const LatencyModel& latency, std::uint64_t server_cycles, double cycle_time_ns,
                    std::mt19937_64& rng, std::uint64_t sequence = 0);

struct Handled {
  ResponsePacket response;
  std::uint64_t server_cycles = 0;
};

/// Server side of a transport.
class Endpoint {
 public:
  virtual ~Endpoint() = default;
  virtual Handled handle(const RequestPacket& request) = 0;
  /// Extra server-side delay (e.g. injected noise) for a response that is being timed.
  virtual double server_delay_ns() { return 0.0; }
  virtual double cycle_time_ns() const = 0;
  /// A frame that could not be decoded reached the front end.
  virtual void on_malformed() {}
};

struct Exchange {
  ResponsePacket response;
  double rtt_ns = 0.0;
};

class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// Request whose timing the caller does not need.
  virtual ResponsePacket send(const RequestPacket& request) = 0;
  virtual Exchange round_trip(const RequestPacket& request) = 0;
};

/// In-process transport: calls the endpoint directly and synthesises the RTT
/// from the latency model with its own seeded generator.
class LoopbackTransport final : public Transport {
 public:
  LoopbackTransport(Endpoint& endpoint, LatencyModel latency, std::uint64_t seed);

  ResponsePacket send(const RequestPacket& request) override;
  Exchange round_trip(const RequestPacket& request) override;

  const LatencyModel& latency() const noexcept { return latency_; }

 private:
  Endpoint& endpoint_;
  LatencyModel latency_;
  std::mt19937_64 rng_;
};

}  // namespace nslab::wire
