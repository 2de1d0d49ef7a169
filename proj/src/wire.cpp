#include "nslab/wire.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace nslab::wire {

namespace {

constexpr std::array<std::string_view, kMaxOpcode + 1> kOpcodeNames = {
    "",           "LEAK_CACHE", "LEAK_AVX",  "TRANSMIT_CACHE", "TRANSMIT_AVX", "DOWNLOAD",
    "ASLR_PROBE", "TIMING_FN",  "VALUE_CMP", "ADVANCE_CLOCK",  "RESET"};

void put_u64(std::uint8_t* out, std::uint64_t v) noexcept {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in) noexcept {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[i];
  return v;
}

}  // namespace

std::string_view to_string(Opcode op) noexcept {
  const auto raw = static_cast<std::uint8_t>(op);
  return is_known_opcode(raw) ? kOpcodeNames[raw] : std::string_view("UNKNOWN");
}

std::optional<Opcode> parse_opcode(std::string_view text) {
  for (std::uint8_t raw = 1; raw <= kMaxOpcode; ++raw)
    if (kOpcodeNames[raw] == text) return static_cast<Opcode>(raw);
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    unsigned value = 0;
    const auto* first = text.data() + 2;
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value, 16);
    if (ec == std::errc{} && ptr == last && value <= 0xFF && is_known_opcode(static_cast<std::uint8_t>(value)))
      return static_cast<Opcode>(value);
  }
  return std::nullopt;
}

Frame encode(const RequestPacket& p) noexcept {
  Frame f{};
  f[0] = static_cast<std::uint8_t>(p.opcode);
  put_u64(&f[1], p.arg);
  put_u64(&f[9], p.nonce);
  return f;
}

Frame encode(const ResponsePacket& p) noexcept {
  Frame f{};
  f[0] = static_cast<std::uint8_t>(p.status);
  put_u64(&f[1], p.nonce);
  put_u64(&f[9], p.payload);
  return f;
}

Decoded<RequestPacket> decode_request(std::span<const std::uint8_t> bytes) noexcept {
  if (bytes.size() != kFrameSize) return DecodeError{DecodeErrc::length_mismatch, std::nullopt};
  const std::uint64_t nonce = get_u64(&bytes[9]);
  if (!is_known_opcode(bytes[0])) return DecodeError{DecodeErrc::unknown_opcode, nonce};
  return RequestPacket{static_cast<Opcode>(bytes[0]), get_u64(&bytes[1]), nonce};
}

Decoded<ResponsePacket> decode_response(std::span<const std::uint8_t> bytes) noexcept {
  if (bytes.size() != kFrameSize) return DecodeError{DecodeErrc::length_mismatch, std::nullopt};
  const std::uint64_t nonce = get_u64(&bytes[1]);
  if (bytes[0] > static_cast<std::uint8_t>(Status::bad_arg))
    return DecodeError{DecodeErrc::unknown_status, nonce};
  return ResponsePacket{static_cast<Status>(bytes[0]), nonce, get_u64(&bytes[9])};
}

std::uint64_t pack_range(std::uint32_t lo, std::uint32_t mid) {
  if (lo >= (1u << 31)) throw std::invalid_argument("pack_range: lo must fit in 31 bits");
  return kOutOfBoundsFlag | (static_cast<std::uint64_t>(lo) << 32) | mid;
}

std::optional<ProbeRange> unpack_range(std::uint64_t arg) noexcept {
  if (!(arg & kOutOfBoundsFlag)) return std::nullopt;
  return ProbeRange{static_cast<std::uint32_t>((arg >> 32) & 0x7FFF'FFFFu),
                    static_cast<std::uint32_t>(arg & 0xFFFF'FFFFu)};
}

LatencyModel LatencyModel::local() { return {"local", 100'000.0, 15'600.0, NoiseShape::gaussian}; }
LatencyModel LatencyModel::cloud() { return {"cloud", 250'000.0, 52'300.0, NoiseShape::gaussian}; }
LatencyModel LatencyModel::arm() { return {"arm", 500'000.0, 128'500.0, NoiseShape::gaussian}; }
LatencyModel LatencyModel::noiseless(double base_ns) { return {"none", base_ns, 0.0, NoiseShape::gaussian}; }

LatencyModel LatencyModel::from_preset(std::string_view name) {
  if (name == "local") return local();
  if (name == "cloud") return cloud();
  if (name == "arm") return arm();
  if (name == "none") return noiseless();
  throw std::invalid_argument("unknown latency preset '" + std::string(name) + "'");
}

void LatencyModel::validate() const {
  if (!(sigma_ns >= 0.0) || !std::isfinite(sigma_ns)) throw std::invalid_argument("latency sigma must be >= 0");
  if (!(base_ns >= 0.0) || !std::isfinite(base_ns)) throw std::invalid_argument("latency base must be >= 0");
}

double LatencyModel::sample_noise(std::mt19937_64& rng) const {
  if (sigma_ns == 0.0) return 0.0;
  if (shape == NoiseShape::gaussian) {
    std::normal_distribution<double> n(0.0, sigma_ns);
    return n(rng);
  }
  // Lognormal with shape s = 1, rescaled to the requested σ and centred.
  constexpr double s = 1.0;
  const double sd_unit = std::sqrt((std::exp(s * s) - 1.0) * std::exp(s * s));
  const double mean_unit = std::exp(s * s / 2.0);
  std::lognormal_distribution<double> ln(0.0, s);
  return (ln(rng) - mean_unit) * (sigma_ns / sd_unit);
}

double compose_rtt(const LatencyModel& latency, std::uint64_t server_cycles, double cycle_time_ns,
                   double noise_ns) noexcept {
  const double rtt = 2.0 * latency.base_ns + static_cast<double>(server_cycles) * cycle_time_ns + noise_ns;
  return std::max(rtt, 0.0);
}

Sample send_request(const LatencyModel& latency, std::uint64_t server_cycles, double cycle_time_ns,
                    std::mt19937_64& rng, std::uint64_t sequence) {
  return {compose_rtt(latency, server_cycles, cycle_time_ns, latency.sample_noise(rng)), sequence};
}

LoopbackTransport::LoopbackTransport(Endpoint& endpoint, LatencyModel latency, std::uint64_t seed)
    : endpoint_(endpoint), latency_(std::move(latency)), rng_(seed) {
  latency_.validate();
}

ResponsePacket LoopbackTransport::send(const RequestPacket& request) {
  return endpoint_.handle(request).response;
}

Exchange LoopbackTransport::round_trip(const RequestPacket& request) {
  const Handled h = endpoint_.handle(request);
  const double noise = latency_.sample_noise(rng_) + endpoint_.server_delay_ns();
  return {h.response, compose_rtt(latency_, h.server_cycles, endpoint_.cycle_time_ns(), noise)};
}

}  // namespace nslab::wire
