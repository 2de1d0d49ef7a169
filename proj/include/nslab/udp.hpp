#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>

#include "nslab/wire.hpp"

namespace nslab::udp {

inline constexpr std::uint16_t kDefaultPort = 43210;

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ServerOptions {
  std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
  std::string bind_address = "127.0.0.1";
  // Noise added on top of the simulated server time before replying.
  wire::LatencyModel injected = wire::LatencyModel::noiseless(0.0);
  std::uint64_t seed = 1;
};

struct ServeStats {
  std::uint64_t answered = 0;
  std::uint64_t malformed = 0;
  std::uint64_t dropped = 0;
};

/// Sequential UDP front end for an Endpoint. Each reply is held back until
/// server_cycles·cycle_time plus injected noise has elapsed, so wall-clock
/// round trips carry the simulated timing.
class UdpServer {
 public:
  UdpServer(wire::Endpoint& endpoint, ServerOptions options);
  ~UdpServer();
  UdpServer(const UdpServer&) = delete;
  UdpServer& operator=(const UdpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Runs until `stop` becomes true; polls it every few milliseconds.
  ServeStats serve(const std::atomic<bool>& stop);

 private:
  wire::Endpoint& endpoint_;
  ServerOptions options_;
  std::mt19937_64 rng_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

class UdpTransport final : public wire::Transport {
 public:
  UdpTransport(const std::string& host, std::uint16_t port,
               std::chrono::milliseconds timeout = std::chrono::milliseconds(1000));
  ~UdpTransport() override;
  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  /// Throws wire::TimeoutError if no matching reply arrives in time.
  wire::ResponsePacket send(const wire::RequestPacket& request) override;
  wire::Exchange round_trip(const wire::RequestPacket& request) override;

 private:
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
};

/// "udp://host:port" or "host:port".
struct Target {
  std::string host;
  std::uint16_t port = kDefaultPort;
};
Target parse_target(std::string_view text);

}  // namespace nslab::udp
