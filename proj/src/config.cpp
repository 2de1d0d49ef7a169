#include "nslab/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace nslab::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Ctx {
  const std::string& source;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  }
};

std::uint64_t to_u64(const Ctx& ctx, const std::string& key, const std::string& v) {
  std::string_view t = v;
  int base = 10;
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    t.remove_prefix(2);
    base = 16;
  }
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out, base);
  if (ec != std::errc{} || p != t.data() + t.size() || t.empty()) ctx.fail(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const Ctx& ctx, const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) ctx.fail(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const Ctx& ctx, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  ctx.fail(key + ": expected true/false, got '" + v + "'");
}

std::vector<std::uint8_t> from_hex(const Ctx& ctx, const std::string& v) {
  if (v.size() % 2) ctx.fail("secret_hex: odd number of digits");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < v.size(); i += 2) {
    std::uint8_t b = 0;
    const auto [p, ec] = std::from_chars(v.data() + i, v.data() + i + 2, b, 16);
    if (ec != std::errc{} || p != v.data() + i + 2) ctx.fail("secret_hex: bad digit in '" + v + "'");
    out.push_back(b);
  }
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::vector<std::uint8_t> secret_bytes(const uarch::SecretStore& s) {
  const auto bytes = s.bytes();
  const std::size_t from = s.secret_offset() / 8;
  return {bytes.begin() + static_cast<std::ptrdiff_t>(std::min(from, bytes.size())), bytes.end()};
}

}  // namespace

LabConfig parse(std::istream& in, const std::string& source) {
  LabConfig cfg;
  auto& v = cfg.victim;
  std::uint64_t public_bits = v.secrets.bitstream_length();
  std::vector<std::uint8_t> secret = secret_bytes(v.secrets);

  std::string section;
  std::string raw;
  Ctx ctx{source, 0};
  while (std::getline(in, raw)) {
    ++ctx.line;
    const auto hash = raw.find_first_of("#;");
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "victim" && section != "latency" && section != "uarch" && section != "net" && section != "dispatch")
        ctx.fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string val = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) ctx.fail("key '" + key + "' outside of a section");

    if (section == "victim") {
      if (key == "secret_text") secret.assign(val.begin(), val.end());
      else if (key == "secret_hex") secret = from_hex(ctx, val);
      else if (key == "public_bits") public_bits = to_u64(ctx, key, val);
      else if (key == "valid_aslr_offset") v.valid_aslr_offset = to_u64(ctx, key, val);
      else if (key == "aslr_space_bits") v.aslr_space_bits = static_cast<unsigned>(to_u64(ctx, key, val));
      else if (key == "secret_value") v.secret_value = to_u64(ctx, key, val);
      else if (key == "mitigation_barrier") v.mitigation_barrier = to_bool(ctx, key, val);
      else if (key == "mitigation_noise_sigma_ns") v.mitigation_noise_sigma_ns = to_double(ctx, key, val);
      else if (key == "clock") {
        if (val == "virtual") v.clock_mode = victim::ClockMode::virtual_clock;
        else if (val == "wall") v.clock_mode = victim::ClockMode::wall;
        else ctx.fail("clock: expected virtual or wall, got '" + val + "'");
      } else if (key == "handler_cycles") v.handler_cycles = to_u64(ctx, key, val);
      else if (key == "request_tick_ns") v.request_tick_ns = to_u64(ctx, key, val);
      else if (key == "trace") cfg.trace_path = val;
      else ctx.fail("unknown key '" + key + "' in [victim]");
    } else if (section == "latency") {
      if (key == "preset") {
        try {
          v.latency = wire::LatencyModel::from_preset(val);
        } catch (const std::invalid_argument& e) {
          ctx.fail(e.what());
        }
      } else if (key == "base_ns") v.latency.base_ns = to_double(ctx, key, val);
      else if (key == "sigma_ns") v.latency.sigma_ns = to_double(ctx, key, val);
      else if (key == "shape") {
        if (val == "gaussian") v.latency.shape = wire::NoiseShape::gaussian;
        else if (val == "lognormal") v.latency.shape = wire::NoiseShape::lognormal;
        else ctx.fail("shape: expected gaussian or lognormal, got '" + val + "'");
      } else ctx.fail("unknown key '" + key + "' in [latency]");
    } else if (section == "uarch") {
      auto& u = v.uarch;
      if (key == "cycle_time_ns") u.cycle_time_ns = to_double(ctx, key, val);
      else if (key == "hit_cycles") u.hit_cycles = to_u64(ctx, key, val);
      else if (key == "miss_cycles") u.miss_cycles = to_u64(ctx, key, val);
      else if (key == "avx_warm_cycles") u.avx_warm_cycles = to_u64(ctx, key, val);
      else if (key == "avx_max_penalty_cycles") u.avx_max_penalty_cycles = to_u64(ctx, key, val);
      else if (key == "avx_decay_start_ns") u.avx_decay_start_ns = to_u64(ctx, key, val);
      else if (key == "avx_decay_end_ns") u.avx_decay_end_ns = to_u64(ctx, key, val);
      else if (key == "eviction_lambda_bytes") u.eviction_lambda_bytes = to_double(ctx, key, val);
      else ctx.fail("unknown key '" + key + "' in [uarch]");
    } else if (section == "net") {
      if (key == "port") {
        const auto p = to_u64(ctx, key, val);
        if (p > 65535) ctx.fail("port out of range");
        cfg.port = static_cast<std::uint16_t>(p);
      } else if (key == "bind") cfg.bind_address = val;
      else if (key == "timeout_ms") cfg.timeout = std::chrono::milliseconds(to_u64(ctx, key, val));
      else ctx.fail("unknown key '" + key + "' in [net]");
    } else {  // dispatch
      if (key != "enabled") ctx.fail("unknown key '" + key + "' in [dispatch]");
      std::uint32_t mask = 0;
      std::stringstream list(val);
      std::string item;
      while (std::getline(list, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto op = wire::parse_opcode(item);
        if (!op) ctx.fail("dispatch table names unknown opcode '" + item + "'");
        mask |= 1u << static_cast<unsigned>(*op);
      }
      v.enabled_opcodes = mask;
    }
  }

  v.secrets = uarch::SecretStore::with_secret(public_bits, secret);
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

LabConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void print_effective(std::ostream& out, const LabConfig& cfg) {
  const auto& v = cfg.victim;
  out << "[victim]\n";
  out << "public_bits = " << v.secrets.bitstream_length() << '\n';
  out << "secret_hex = ";
  static constexpr char hex[] = "0123456789abcdef";
  for (auto b : secret_bytes(v.secrets)) out << hex[b >> 4] << hex[b & 15];
  out << '\n';
  out << "valid_aslr_offset = " << v.valid_aslr_offset << '\n';
  out << "aslr_space_bits = " << v.aslr_space_bits << '\n';
  out << "secret_value = " << v.secret_value << '\n';
  out << "mitigation_barrier = " << (v.mitigation_barrier ? "true" : "false") << '\n';
  out << "mitigation_noise_sigma_ns = " << fmt(v.mitigation_noise_sigma_ns) << '\n';
  out << "clock = " << (v.clock_mode == victim::ClockMode::wall ? "wall" : "virtual") << '\n';
  out << "handler_cycles = " << v.handler_cycles << '\n';
  out << "request_tick_ns = " << v.request_tick_ns << '\n';
  if (!cfg.trace_path.empty()) out << "trace = " << cfg.trace_path << '\n';

  out << "\n[latency]\n";
  out << "preset = " << v.latency.preset << '\n';
  out << "base_ns = " << fmt(v.latency.base_ns) << '\n';
  out << "sigma_ns = " << fmt(v.latency.sigma_ns) << '\n';
  out << "shape = " << (v.latency.shape == wire::NoiseShape::lognormal ? "lognormal" : "gaussian") << '\n';

  const auto& u = v.uarch;
  out << "\n[uarch]\n";
  out << "cycle_time_ns = " << fmt(u.cycle_time_ns) << '\n';
  out << "hit_cycles = " << u.hit_cycles << '\n';
  out << "miss_cycles = " << u.miss_cycles << '\n';
  out << "avx_warm_cycles = " << u.avx_warm_cycles << '\n';
  out << "avx_max_penalty_cycles = " << u.avx_max_penalty_cycles << '\n';
  out << "avx_decay_start_ns = " << u.avx_decay_start_ns << '\n';
  out << "avx_decay_end_ns = " << u.avx_decay_end_ns << '\n';
  out << "eviction_lambda_bytes = " << fmt(u.eviction_lambda_bytes) << '\n';

  out << "\n[net]\n";
  out << "port = " << cfg.port << '\n';
  out << "bind = " << cfg.bind_address << '\n';
  out << "timeout_ms = " << cfg.timeout.count() << '\n';

  out << "\n[dispatch]\nenabled = ";
  bool first = true;
  for (unsigned i = 1; i <= wire::kMaxOpcode; ++i) {
    const auto op = static_cast<wire::Opcode>(i);
    if (!v.opcode_enabled(op)) continue;
    out << (first ? "" : ", ") << wire::to_string(op);
    first = false;
  }
  out << '\n';
}

}  // namespace nslab::config
