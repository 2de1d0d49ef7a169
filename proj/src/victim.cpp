#include "nslab/victim.hpp"

#include <ostream>
#include <stdexcept>
#include <string_view>

namespace nslab::victim {

using wire::Opcode;
using wire::Status;

uarch::SecretStore VictimConfig::default_secrets() {
  constexpr std::string_view text = "Spectre!";
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  return uarch::SecretStore::with_secret(64, bytes);
}

void VictimConfig::validate() const {
  if (secrets.bitstream_length() == 0) throw std::invalid_argument("array length must be positive");
  if (aslr_space_bits < 1 || aslr_space_bits > 31) throw std::invalid_argument("aslr_space_bits must be in [1, 31]");
  if (valid_aslr_offset >= (1ull << aslr_space_bits))
    throw std::invalid_argument("valid_aslr_offset must be < 2^aslr_space_bits");
  if (!(mitigation_noise_sigma_ns >= 0.0)) throw std::invalid_argument("mitigation_noise_sigma must be >= 0");
  if (enabled_opcodes & ~kAllOpcodes) throw std::invalid_argument("dispatch table names an unknown opcode");
  latency.validate();
  uarch.validate();
}

std::uint64_t OpcodeCounters::total() const noexcept {
  std::uint64_t n = 0;
  for (auto c : by_opcode) n += c;
  return n;
}

wire::Handled handle_request(uarch::MicroarchState& state, const VictimConfig& config,
                             const wire::RequestPacket& request, uarch::Rng& rng) {
  wire::Handled out;
  out.response.nonce = request.nonce;
  out.server_cycles = config.handler_cycles;
  if (config.clock_mode == ClockMode::virtual_clock) state.clock.advance(static_cast<std::int64_t>(config.request_tick_ns));

  if (!wire::is_known_opcode(static_cast<std::uint8_t>(request.opcode)) || !config.opcode_enabled(request.opcode)) {
    out.response.status = Status::bad_opcode;
    return out;
  }

  const auto spec = config.mitigation_barrier ? uarch::Speculation::barrier : uarch::Speculation::enabled;
  const std::uint64_t arg = request.arg;

  switch (request.opcode) {
    case Opcode::leak_cache:
      out.server_cycles += uarch::leak_gadget_cache(state, config.secrets, arg, spec).cycles;
      break;
    case Opcode::leak_avx:
      out.server_cycles += uarch::leak_gadget_avx(state, config.secrets, arg, spec).cycles;
      break;
    case Opcode::transmit_cache:
      out.server_cycles += uarch::transmit_gadget_cache(state);
      out.response.payload = state.flag_value ? 1 : 0;
      break;
    case Opcode::transmit_avx:
      out.server_cycles += uarch::transmit_gadget_avx(state);
      break;
    case Opcode::download:
      uarch::thrash(state, arg, rng);
      out.response.payload = arg;
      break;
    case Opcode::aslr_probe:
      if (auto range = wire::unpack_range(arg)) {
        const std::uint64_t space = 1ull << config.aslr_space_bits;
        if (range->lo >= range->mid || range->mid > space) {
          out.response.status = Status::bad_arg;
          break;
        }
        uarch::aslr_range_gadget(state, range->lo, range->mid, config.valid_aslr_offset, spec);
      } else {
        uarch::aslr_gadget(state, arg, config.array_length(), config.valid_aslr_offset, spec);
      }
      break;
    case Opcode::timing_fn:
      out.server_cycles += uarch::timing_function(state, config.valid_aslr_offset);
      break;
    case Opcode::value_cmp: {
      const bool oob = arg & wire::kOutOfBoundsFlag;
      uarch::value_threshold_gadget(state, arg & ~wire::kOutOfBoundsFlag, config.secret_value,
                                    oob ? uarch::Access::out_of_bounds : uarch::Access::in_bounds, spec);
      break;
    }
    case Opcode::advance_clock:
      if (config.clock_mode != ClockMode::virtual_clock || arg > static_cast<std::uint64_t>(INT64_MAX)) {
        out.response.status = Status::bad_arg;
        break;
      }
      state.clock.advance(static_cast<std::int64_t>(arg));
      out.response.payload = state.clock.now();
      break;
    case Opcode::reset: {
      const uarch::VirtualClock clock = state.clock;
      state = uarch::MicroarchState(config.uarch);
      state.clock = clock;
      break;
    }
  }
  return out;
}

Victim::Victim(VictimConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      state_((config_.validate(), config_.uarch)),
      rng_(seed),
      noise_rng_(seed ^ 0x9E3779B97F4A7C15ull),
      started_(std::chrono::steady_clock::now()) {}

wire::Handled Victim::handle(const wire::RequestPacket& request) {
  if (config_.clock_mode == ClockMode::wall) {
    const auto elapsed = std::chrono::steady_clock::now() - started_;
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count();
    if (static_cast<uarch::Nanos>(ns) > state_.clock.now()) state_.clock.advance_to(static_cast<uarch::Nanos>(ns));
  }
  wire::Handled h = handle_request(state_, config_, request, rng_);
  const auto raw = static_cast<std::size_t>(request.opcode);
  if (h.response.status == Status::ok)
    ++counters_.by_opcode[raw];
  else
    ++counters_.rejected;
  if (trace_) {
    *trace_ << "opcode=" << wire::to_string(request.opcode) << " arg=" << request.arg
            << " server_cycles=" << h.server_cycles << " status=" << static_cast<int>(h.response.status) << '\n';
  }
  return h;
}

double Victim::server_delay_ns() {
  if (config_.mitigation_noise_sigma_ns == 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, config_.mitigation_noise_sigma_ns);
  return n(noise_rng_);
}

}  // namespace nslab::victim
