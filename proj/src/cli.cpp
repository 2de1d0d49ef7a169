#include "nslab/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "nslab/attacker.hpp"
#include "nslab/config.hpp"
#include "nslab/figures.hpp"
#include "nslab/lab.hpp"
#include "nslab/udp.hpp"

namespace nslab::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using wire::Opcode;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string target = "loopback";
  std::string config_path;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string clock;
  unsigned timeout_ms = 1000;
  // loopback victim overrides
  std::optional<std::string> secret_text;
  std::optional<std::string> secret_hex;
  bool barrier = false;
  std::optional<double> noise_sigma_ns;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--target", c.target, "loopback or udp://host:port")->capture_default_str();
  cmd->add_option("--config", c.config_path, "victim config file (loopback)");
  cmd->add_option("--preset", c.preset, "latency preset: local, cloud, arm or none");
  cmd->add_option("--seed", c.seed, "RNG seed (default: $NETSPECTRE_LAB_SEED or 1)");
  if (with_out) cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_option("--clock", c.clock, "attacker clock handling: virtual or wall")
      ->check(CLI::IsMember({"virtual", "wall"}));
  cmd->add_option("--timeout-ms", c.timeout_ms, "UDP reply timeout")->capture_default_str();
  cmd->add_option("--secret-text", c.secret_text, "planted secret (loopback)");
  cmd->add_option("--secret-hex", c.secret_hex, "planted secret as hex (loopback)");
  cmd->add_flag("--barrier", c.barrier, "enable the speculation barrier (loopback)");
  cmd->add_option("--noise-sigma-ns", c.noise_sigma_ns, "artificial server-side noise (loopback)");
}

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("NETSPECTRE_LAB_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used, 0);
      if (used == std::string_view(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw config::ConfigError("NETSPECTRE_LAB_SEED is not an unsigned integer");
  }
  return 1;
}

std::string hex_of(std::span<const std::uint8_t> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s += digits[b >> 4];
    s += digits[b & 15];
  }
  return s;
}

std::vector<std::uint8_t> parse_hex(const std::string& text) {
  if (text.size() % 2) throw config::ConfigError("hex string has an odd number of digits");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 2) {
    const auto byte = text.substr(i, 2);
    if (byte.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
      throw config::ConfigError("bad hex digit in '" + text + "'");
    out.push_back(static_cast<std::uint8_t>(std::stoul(byte, nullptr, 16)));
  }
  return out;
}

victim::VictimConfig loopback_victim(const Common& c) {
  victim::VictimConfig v = c.config_path.empty() ? config::LabConfig{}.victim : config::load(c.config_path).victim;
  if (c.preset) {
    try {
      v.latency = wire::LatencyModel::from_preset(*c.preset);
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(e.what());
    }
  }
  if (c.secret_text || c.secret_hex) {
    std::vector<std::uint8_t> secret;
    if (c.secret_hex)
      secret = parse_hex(*c.secret_hex);
    else
      secret.assign(c.secret_text->begin(), c.secret_text->end());
    v.secrets = uarch::SecretStore::with_secret(v.secrets.bitstream_length(), secret);
  }
  if (c.barrier) v.mitigation_barrier = true;
  if (c.noise_sigma_ns) v.mitigation_noise_sigma_ns = *c.noise_sigma_ns;
  if (c.clock == "wall") v.clock_mode = victim::ClockMode::wall;
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  return v;
}

/// A connected attacker session: an in-process victim or a UDP client.
struct Connection {
  std::unique_ptr<lab::LoopbackLab> lab;
  std::unique_ptr<udp::UdpTransport> udp;
  std::unique_ptr<attacker::Session> udp_session;

  bool loopback() const noexcept { return lab != nullptr; }
  attacker::Session& session() { return lab ? lab->session() : *udp_session; }
  const victim::VictimConfig* victim_config() const { return lab ? &lab->victim().config() : nullptr; }
};

Connection connect(const Common& c, std::uint64_t seed) {
  Connection conn;
  if (c.target == "loopback") {
    conn.lab = std::make_unique<lab::LoopbackLab>(loopback_victim(c), seed);
    return conn;
  }
  udp::Target t;
  try {
    t = udp::parse_target(c.target);
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  conn.udp = std::make_unique<udp::UdpTransport>(t.host, t.port, std::chrono::milliseconds(c.timeout_ms));
  const auto mode = c.clock == "wall" ? victim::ClockMode::wall : victim::ClockMode::virtual_clock;
  conn.udp_session = std::make_unique<attacker::Session>(*conn.udp, mode);
  return conn;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json tally_json(const attacker::RequestTally& t) {
  json by = json::object();
  for (unsigned i = 1; i <= wire::kMaxOpcode; ++i) {
    const auto op = static_cast<Opcode>(i);
    if (t.of(op)) by[std::string(wire::to_string(op))] = t.of(op);
  }
  return json{{"attack_requests", t.attack_requests()}, {"by_opcode", by}};
}

json calibration_json(const stats::Calibration& c) {
  return json{{"mean_hit_ns", c.mean_hit},
              {"mean_miss_ns", c.mean_miss},
              {"threshold_ns", c.threshold},
              {"sigma_est_ns", c.sigma_est},
              {"samples_per_case", c.samples_per_case}};
}

std::string bit_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "bit_%04zu", i);
  return buf;
}

std::string printable(std::span<const std::uint8_t> bytes) {
  std::string s;
  for (auto b : bytes) s += (b >= 0x20 && b < 0x7f) ? static_cast<char>(b) : '.';
  return s;
}

// ---- leak ------------------------------------------------------------------

struct LeakArgs {
  Common common;
  std::string channel = "cache";
  std::size_t bits = 64;
  std::uint64_t n = 1'000'000;
  std::uint64_t calibration_n = 0;
  std::string classifier = "bayes";
  std::optional<std::uint64_t> first_bit;
  std::uint64_t array_length = 64;
  double packet_cost_ns = 17'300.0;
  double min_confidence = 1.0;
  std::optional<std::string> known_hex;
  bool dump_samples = false;
  bool no_histograms = false;
};

int cmd_leak(const LeakArgs& a, std::ostream& out) {
  if (a.bits == 0 || a.bits % 8) throw config::ConfigError("--bits must be a positive multiple of 8");
  const std::uint64_t seed = resolve_seed(a.common);
  Connection conn = connect(a.common, seed);
  const auto* vc = conn.victim_config();

  attacker::ExtractionPlan plan;
  plan.channel = a.channel == "avx" ? attacker::Channel::avx : attacker::Channel::cache;
  plan.measurements_per_bit = a.n;
  plan.calibration_samples = a.calibration_n;
  plan.classifier = a.classifier == "mode" ? attacker::Classifier::mode : attacker::Classifier::bayes;
  plan.min_confidence = a.min_confidence;
  plan.packet_cost_ns = a.packet_cost_ns;
  plan.in_bounds_length = vc ? vc->array_length() : a.array_length;
  plan.first_bit = a.first_bit ? *a.first_bit : (vc ? vc->secrets.secret_offset() : 64);
  plan.keep_samples = !a.no_histograms || a.dump_samples;
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }

  const fs::path dir = prepare_out(a.common.out);
  const auto calib = attacker::calibrate(conn.session(), plan);

  const auto on_bit = [&](attacker::BitResult& bit, std::size_t done, std::size_t, const attacker::RateProjection&) {
    const std::size_t i = done - 1;
    if (!a.no_histograms) {
      const stats::HistogramSpec spec;
      const auto h = stats::histogram(bit.samples, spec);
      const auto s = stats::smooth(h.counts, spec.smoothing_window);
      std::ofstream f(dir / (bit_name(i) + "_hist.csv"), std::ios::binary | std::ios::trunc);
      stats::write_histogram_csv(f, h, s);
    }
    if (a.dump_samples) {
      stats::MeasurementSet set;
      set.samples.reserve(bit.samples.size());
      for (std::size_t k = 0; k < bit.samples.size(); ++k) set.samples.push_back({bit.samples[k], k});
      std::ofstream f(dir / (bit_name(i) + "_samples.csv"), std::ios::binary | std::ios::trunc);
      stats::write_samples_csv(f, std::span(&set, 1));
    }
    bit.samples.clear();
    bit.samples.shrink_to_fit();
  };
  const auto report = attacker::leak_range(conn.session(), plan, calib, a.bits / 8, on_bit);

  std::string bitstring;
  for (const auto& b : report.bits) bitstring += b.bit ? '1' : '0';

  std::optional<std::vector<int>> truth;
  if (a.known_hex) {
    const auto known = parse_hex(*a.known_hex);
    if (known.size() * 8 < a.bits) throw config::ConfigError("--known-hex is shorter than --bits");
    truth.emplace();
    for (std::size_t i = 0; i < a.bits; ++i) truth->push_back((known[i / 8] >> (7 - i % 8)) & 1);
  } else if (vc) {
    truth.emplace();
    for (std::size_t i = 0; i < a.bits; ++i) truth->push_back(vc->secrets.bit(plan.first_bit + i) ? 1 : 0);
  }

  json per_bit = json::array();
  for (const auto& b : report.bits) {
    per_bit.push_back(json{{"index", b.index},
                           {"bit", b.bit},
                           {"confidence", number_or_null(b.confidence)},
                           {"low_confidence", b.low_confidence},
                           {"mean_ns", b.mean_ns},
                           {"mode_ns", b.mode_ns},
                           {"llr", number_or_null(b.llr)}});
  }
  const auto& rate = report.rate;
  const double baseline = plan.channel == attacker::Channel::cache ? 30.0 : 8.0;
  json j{{"command", "leak"},
         {"target", a.common.target},
         {"channel", std::string(attacker::to_string(plan.channel))},
         {"classifier", std::string(attacker::to_string(plan.classifier))},
         {"seed", seed},
         {"measurements_per_bit", plan.measurements_per_bit},
         {"first_bit", plan.first_bit},
         {"calibration", calibration_json(calib)},
         {"bits", bitstring},
         {"bytes_hex", hex_of(report.bytes)},
         {"text", printable(report.bytes)},
         {"any_low_confidence", report.any_low_confidence()},
         {"per_bit", per_bit},
         {"requests", tally_json(report.requests)},
         {"projection",
          {{"packet_cost_ns", plan.packet_cost_ns},
           {"requests_per_bit", rate.requests_per_bit},
           {"request_seconds_per_bit", rate.request_seconds_per_bit},
           {"idle_seconds_per_bit", rate.idle_seconds_per_bit},
           {"bits_per_hour", rate.bits_per_hour},
           {"minutes_per_byte", rate.minutes_per_byte},
           {"baseline_minutes_per_byte", baseline},
           {"ratio_to_baseline", rate.minutes_per_byte / baseline}}}};
  if (vc) j["preset"] = vc->latency.preset;
  double err_rate = 0.0;
  if (truth) {
    err_rate = stats::error_rate(report.bit_values(), *truth);
    j["error_rate"] = err_rate;
    j["bit_errors"] = static_cast<std::uint64_t>(std::llround(err_rate * static_cast<double>(a.bits)));
  }
  write_json(dir / "summary.json", j);

  char buf[256];
  out << "bits:  " << bitstring << '\n';
  out << "bytes: " << hex_of(report.bytes) << "  \"" << printable(report.bytes) << "\"\n";
  if (truth) {
    std::snprintf(buf, sizeof buf, "error rate: %.4f%%\n", 100.0 * err_rate);
    out << buf;
  }
  std::snprintf(buf, sizeof buf,
                "requests/bit: %.1f  projected: %.2f min/byte (baseline %.0f), %.1f bits/hour, idle %.1f s/bit\n",
                rate.requests_per_bit, rate.minutes_per_byte, baseline, rate.bits_per_hour, rate.idle_seconds_per_bit);
  out << buf;
  if (report.any_low_confidence()) {
    out << "warning: low-confidence bits present\n";
    return kLowConfidence;
  }
  return kOk;
}

// ---- aslr ------------------------------------------------------------------

struct AslrArgs {
  Common common;
  unsigned space_bits = 20;
  std::uint64_t n = 1'000'000;
  std::uint64_t calibration_n = 0;
  unsigned retries = 3;
  std::optional<std::uint64_t> valid_offset;
  std::uint64_t array_length = 64;
};

int cmd_aslr(const AslrArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.common);
  Common common = a.common;
  Connection conn;
  if (common.target == "loopback") {
    auto v = loopback_victim(common);
    v.aslr_space_bits = a.space_bits;
    if (a.valid_offset) v.valid_aslr_offset = *a.valid_offset;
    try {
      v.validate();
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(e.what());
    }
    conn.lab = std::make_unique<lab::LoopbackLab>(v, seed);
  } else {
    conn = connect(common, seed);
  }
  const auto* vc = conn.victim_config();

  attacker::AslrPlan plan;
  plan.space_bits = a.space_bits;
  plan.probes_per_check = a.n;
  plan.calibration_samples = a.calibration_n;
  plan.max_retries = a.retries;
  plan.in_bounds_length = vc ? vc->array_length() : a.array_length;
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }

  const fs::path dir = prepare_out(common.out);
  const auto before = conn.session().tally();
  const auto r = attacker::break_aslr(conn.session(), plan);
  const auto used = conn.session().tally() - before;

  {
    std::ofstream f(dir / "aslr_rounds.csv", std::ios::binary | std::ios::trunc);
    f << "round,lo,mid,hi,mean_lower_ns,mean_upper_ns,went_lower,retries\n";
    char buf[256];
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
      const auto& rd = r.rounds[i];
      std::snprintf(buf, sizeof buf, "%zu,%llu,%llu,%llu,%.3f,%.3f,%d,%u\n", i, static_cast<unsigned long long>(rd.lo),
                    static_cast<unsigned long long>(rd.mid), static_cast<unsigned long long>(rd.hi), rd.mean_lower,
                    rd.mean_upper, rd.went_lower ? 1 : 0, rd.retries);
      f << buf;
    }
  }
  json j{{"command", "aslr"},
         {"target", common.target},
         {"seed", seed},
         {"space_bits", plan.space_bits},
         {"probes_per_check", plan.probes_per_check},
         {"success", r.success},
         {"offset", r.offset},
         {"rounds", r.rounds.size()},
         {"calibration", calibration_json(r.calibration)},
         {"requests", tally_json(used)}};
  if (vc) {
    j["preset"] = vc->latency.preset;
    j["correct"] = r.success && r.offset == vc->valid_aslr_offset;
  }
  write_json(dir / "summary.json", j);

  char buf[160];
  if (r.success)
    std::snprintf(buf, sizeof buf, "offset: 0x%llx  rounds: %zu\n", static_cast<unsigned long long>(r.offset),
                  r.rounds.size());
  else
    std::snprintf(buf, sizeof buf, "failed after %zu rounds (no consistent half)\n", r.rounds.size());
  out << buf;
  return r.success ? kOk : kLowConfidence;
}

// ---- value -----------------------------------------------------------------

struct ValueArgs {
  Common common;
  unsigned bits = 16;
  std::uint64_t n = 100'000;
  std::uint64_t calibration_n = 0;
  std::optional<std::uint64_t> secret_value;
};

int cmd_value(const ValueArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(a.common);
  Connection conn;
  if (a.common.target == "loopback") {
    auto v = loopback_victim(a.common);
    if (a.secret_value) v.secret_value = *a.secret_value;
    conn.lab = std::make_unique<lab::LoopbackLab>(v, seed);
  } else {
    conn = connect(a.common, seed);
  }
  const auto* vc = conn.victim_config();

  attacker::ExtractionPlan cal_plan;
  cal_plan.measurements_per_bit = a.n;
  cal_plan.calibration_samples = a.calibration_n;
  attacker::ValuePlan plan;
  plan.value_bits = a.bits;
  plan.measurements_per_round = a.n;
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  const fs::path dir = prepare_out(a.common.out);
  const auto calib = attacker::calibrate(conn.session(), cal_plan);
  const auto r = attacker::value_threshold_search(conn.session(), plan, calib);

  {
    std::ofstream f(dir / "value_rounds.csv", std::ios::binary | std::ios::trunc);
    f << "round,lo,hi,guess,mean_ns,above\n";
    char buf[192];
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
      const auto& rd = r.rounds[i];
      std::snprintf(buf, sizeof buf, "%zu,%llu,%llu,%llu,%.3f,%d\n", i, static_cast<unsigned long long>(rd.lo),
                    static_cast<unsigned long long>(rd.hi), static_cast<unsigned long long>(rd.guess), rd.mean_ns,
                    rd.above ? 1 : 0);
      f << buf;
    }
  }
  json j{{"command", "value"},   {"target", a.common.target}, {"seed", seed},
         {"value_bits", a.bits}, {"value", r.value},          {"rounds", r.rounds.size()},
         {"calibration", calibration_json(calib)}};
  if (vc) j["correct"] = r.value == vc->secret_value;
  write_json(dir / "summary.json", j);
  out << "value: " << r.value << "  rounds: " << r.rounds.size() << '\n';
  return kOk;
}

// ---- figures ---------------------------------------------------------------

int cmd_figures(std::vector<std::string> ids, const Common& c, std::uint64_t n, std::ostream& out) {
  if (ids.empty() || (ids.size() == 1 && ids[0] == "all")) ids = figures::figure_ids();
  for (const auto& id : ids) {
    const auto& known = figures::figure_ids();
    if (std::find(known.begin(), known.end(), id) == known.end())
      throw config::ConfigError("unknown figure '" + id + "'");
  }
  figures::FigureOptions o;
  o.out = c.out;
  o.seed = resolve_seed(c);
  o.preset = c.preset;
  o.n = n;
  if (o.preset) {
    try {
      wire::LatencyModel::from_preset(*o.preset);
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(e.what());
    }
  }
  for (const auto& id : ids) {
    for (const auto& file : figures::write_figure(id, o)) out << id << ": " << (fs::path(c.out) / file).string() << '\n';
  }
  return kOk;
}

// ---- victim ----------------------------------------------------------------

struct VictimArgs {
  std::string config_path;
  std::optional<unsigned> port;
  std::string clock;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string bind;
  unsigned duration_ms = 0;
};

int cmd_victim(const VictimArgs& a, std::ostream& out, std::ostream& err) {
  config::LabConfig cfg = a.config_path.empty() ? config::LabConfig{} : config::load(a.config_path);
  if (a.port) {
    if (*a.port > 65535) throw config::ConfigError("port out of range");
    cfg.port = static_cast<std::uint16_t>(*a.port);
  }
  if (a.clock == "wall") cfg.victim.clock_mode = victim::ClockMode::wall;
  if (a.clock == "virtual") cfg.victim.clock_mode = victim::ClockMode::virtual_clock;
  if (!a.trace.empty()) cfg.trace_path = a.trace;
  if (!a.bind.empty()) cfg.bind_address = a.bind;
  Common seed_src;
  seed_src.seed = a.seed;
  const std::uint64_t seed = resolve_seed(seed_src);

  config::print_effective(out, cfg);
  victim::Victim v(cfg.victim, seed);
  std::ofstream trace;
  if (!cfg.trace_path.empty()) {
    trace.open(cfg.trace_path, std::ios::app);
    if (!trace) throw config::ConfigError("cannot open trace file '" + cfg.trace_path + "'");
    v.set_trace(&trace);
  }
  udp::ServerOptions opts;
  opts.port = cfg.port;
  opts.bind_address = cfg.bind_address;
  opts.injected = cfg.victim.latency;
  opts.seed = seed;
  std::unique_ptr<udp::UdpServer> server_ptr;
  try {
    server_ptr = std::make_unique<udp::UdpServer>(v, opts);
  } catch (const udp::SocketError& e) {
    throw config::ConfigError(e.what());
  }
  auto& server = *server_ptr;
  out << "listening on udp://" << cfg.bind_address << ':' << server.port() << std::endl;

  g_stop.store(false);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread timer;
  if (a.duration_ms) {
    timer = std::thread([ms = a.duration_ms] {
      const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(ms);
      while (!g_stop.load() && std::chrono::steady_clock::now() < until)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
      g_stop.store(true);
    });
  }
  const auto stats = server.serve(g_stop);
  if (timer.joinable()) timer.join();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);

  const auto& c = v.counters();
  err << "served " << stats.answered << " requests (" << stats.malformed << " malformed, " << stats.dropped
      << " dropped)\n";
  for (unsigned i = 1; i <= wire::kMaxOpcode; ++i) {
    const auto op = static_cast<Opcode>(i);
    if (c.of(op)) err << "  " << wire::to_string(op) << ' ' << c.of(op) << '\n';
  }
  err << "  rejected " << c.rejected << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NetSpectre laboratory: simulated victim service and remote attacker", "netspectre_lab"};
  app.require_subcommand(1);

  VictimArgs va;
  auto* victim_cmd = app.add_subcommand("victim", "serve a victim over UDP until interrupted");
  victim_cmd->add_option("--config", va.config_path, "config file");
  victim_cmd->add_option("--port", va.port, "UDP port (0 = ephemeral)");
  victim_cmd->add_option("--clock", va.clock, "virtual or wall")->check(CLI::IsMember({"virtual", "wall"}));
  victim_cmd->add_option("--seed", va.seed, "RNG seed");
  victim_cmd->add_option("--trace", va.trace, "append one line per request to this file");
  victim_cmd->add_option("--bind", va.bind, "bind address");
  victim_cmd->add_option("--duration-ms", va.duration_ms, "stop after this long (0 = until signalled)");

  LeakArgs la;
  auto* leak_cmd = app.add_subcommand("leak", "calibrate and leak out-of-bounds bits");
  add_common(leak_cmd, la.common);
  leak_cmd->add_option("--channel", la.channel, "cache or avx")
      ->check(CLI::IsMember({"cache", "avx"}))
      ->capture_default_str();
  leak_cmd->add_option("--bits", la.bits, "number of bits (multiple of 8)")->capture_default_str();
  leak_cmd->add_option("--n", la.n, "measurements per bit")->capture_default_str();
  leak_cmd->add_option("--calibration-n", la.calibration_n, "samples per corner case (default 4 x n)");
  leak_cmd->add_option("--classifier", la.classifier, "bayes or mode")
      ->check(CLI::IsMember({"bayes", "mode"}))
      ->capture_default_str();
  leak_cmd->add_option("--first-bit", la.first_bit, "out-of-bounds index of the first bit");
  leak_cmd->add_option("--array-length", la.array_length, "victim array length (remote targets)");
  leak_cmd->add_option("--packet-cost-ns", la.packet_cost_ns, "per-request cost for projections")
      ->capture_default_str();
  leak_cmd->add_option("--min-confidence", la.min_confidence, "|z| below this is low confidence")
      ->capture_default_str();
  leak_cmd->add_option("--known-hex", la.known_hex, "known plaintext for the error rate");
  leak_cmd->add_flag("--dump-samples", la.dump_samples, "write raw per-bit samples");
  leak_cmd->add_flag("--no-histograms", la.no_histograms, "skip per-bit histogram CSVs");

  AslrArgs aa;
  auto* aslr_cmd = app.add_subcommand("aslr", "recover the valid offset by binary search");
  add_common(aslr_cmd, aa.common);
  aslr_cmd->add_option("--space-bits", aa.space_bits, "probe space is 2^M offsets")->capture_default_str();
  aslr_cmd->add_option("--n", aa.n, "probes per half per round")->capture_default_str();
  aslr_cmd->add_option("--calibration-n", aa.calibration_n, "samples per corner case (default n)");
  aslr_cmd->add_option("--retries", aa.retries, "retries per inconsistent round")->capture_default_str();
  aslr_cmd->add_option("--valid-offset", aa.valid_offset, "planted offset (loopback)");
  aslr_cmd->add_option("--array-length", aa.array_length, "victim array length (remote targets)");

  ValueArgs xa;
  auto* value_cmd = app.add_subcommand("value", "recover a secret integer by value-thresholding");
  add_common(value_cmd, xa.common);
  value_cmd->add_option("--bits", xa.bits, "value width k")->capture_default_str();
  value_cmd->add_option("--n", xa.n, "measurements per round")->capture_default_str();
  value_cmd->add_option("--calibration-n", xa.calibration_n, "samples per corner case (default 4 x n)");
  value_cmd->add_option("--secret-value", xa.secret_value, "planted value (loopback)");

  Common fa;
  std::vector<std::string> fig_ids;
  std::uint64_t fig_n = 0;
  auto* fig_cmd = app.add_subcommand("figures", "write figure datasets as CSV");
  fig_cmd->add_option("ids", fig_ids, "fig3 fig4 fig5 fig6 fig7 fig8 fig10 or all");
  fig_cmd->add_option("--out", fa.out, "output directory")->capture_default_str();
  fig_cmd->add_option("--seed", fa.seed, "RNG seed");
  fig_cmd->add_option("--preset", fa.preset, "override the figure's latency preset");
  fig_cmd->add_option("--n", fig_n, "samples / trials (0 = figure default)");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*victim_cmd) return cmd_victim(va, out, err);
    if (*leak_cmd) return cmd_leak(la, out);
    if (*aslr_cmd) return cmd_aslr(aa, out);
    if (*value_cmd) return cmd_value(xa, out);
    if (*fig_cmd) return cmd_figures(fig_ids, fa, fig_n, out);
  } catch (const config::ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const wire::TimeoutError& e) {
    err << "target unreachable: " << e.what() << '\n';
    return kUnreachable;
  } catch (const udp::SocketError& e) {
    err << "target unreachable: " << e.what() << '\n';
    return kUnreachable;
  } catch (const attacker::CalibrationError& e) {
    err << "calibration failed: " << e.what() << '\n';
    return kLowConfidence;
  } catch (const attacker::ProtocolError& e) {
    err << "protocol error: " << e.what() << '\n';
    return kUnreachable;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  }
  return kUsage;
}

}  // namespace nslab::cli
