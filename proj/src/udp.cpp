#include "nslab/udp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <variant>

namespace nslab::udp {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res)
    throw SocketError("cannot resolve '" + host + "': " + ::gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(port);
  return addr;
}

void spin_until(Clock::time_point deadline) {
  while (Clock::now() < deadline) {
  }
}

}  // namespace

UdpServer::UdpServer(wire::Endpoint& endpoint, ServerOptions options)
    : endpoint_(endpoint), options_(std::move(options)), rng_(options_.seed) {
  options_.injected.validate();
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw SocketError(errno_text("socket"));
  sockaddr_in addr = resolve(options_.bind_address, options_.port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string msg = errno_text("bind");
    ::close(fd_);
    throw SocketError(msg);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

UdpServer::~UdpServer() {
  if (fd_ >= 0) ::close(fd_);
}

ServeStats UdpServer::serve(const std::atomic<bool>& stop) {
  ServeStats stats;
  std::array<std::uint8_t, 2048> buf{};
  pollfd pfd{fd_, POLLIN, 0};
  while (!stop.load(std::memory_order_relaxed)) {
    if (::poll(&pfd, 1, 20) <= 0) continue;
    sockaddr_in peer{};
    socklen_t peer_len = sizeof(peer);
    const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&peer), &peer_len);
    const auto arrived = Clock::now();
    if (n <= 0) {
      ++stats.dropped;
      continue;
    }
    wire::ResponsePacket response;
    double delay_ns = 0.0;
    auto decoded = wire::decode_request(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
    if (auto* request = std::get_if<wire::RequestPacket>(&decoded)) {
      const wire::Handled h = endpoint_.handle(*request);
      response = h.response;
      delay_ns = static_cast<double>(h.server_cycles) * endpoint_.cycle_time_ns() + endpoint_.server_delay_ns() +
                 options_.injected.sample_noise(rng_);
    } else {
      const auto& err = std::get<wire::DecodeError>(decoded);
      response.status = wire::Status::bad_opcode;
      response.nonce = err.nonce.value_or(0);
      ++stats.malformed;
      endpoint_.on_malformed();
    }
    if (delay_ns > 0.0) spin_until(arrived + std::chrono::nanoseconds(static_cast<std::int64_t>(delay_ns)));
    const wire::Frame frame = wire::encode(response);
    ::sendto(fd_, frame.data(), frame.size(), 0, reinterpret_cast<sockaddr*>(&peer), peer_len);
    ++stats.answered;
  }
  return stats;
}

UdpTransport::UdpTransport(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw SocketError(errno_text("socket"));
  sockaddr_in addr = resolve(host, port);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string msg = errno_text("connect");
    ::close(fd_);
    throw SocketError(msg);
  }
}

UdpTransport::~UdpTransport() {
  if (fd_ >= 0) ::close(fd_);
}

wire::ResponsePacket UdpTransport::send(const wire::RequestPacket& request) { return round_trip(request).response; }

wire::Exchange UdpTransport::round_trip(const wire::RequestPacket& request) {
  const wire::Frame frame = wire::encode(request);
  const auto start = Clock::now();
  if (::send(fd_, frame.data(), frame.size(), 0) != static_cast<ssize_t>(frame.size()))
    throw SocketError(errno_text("send"));
  const auto deadline = start + timeout_;
  std::array<std::uint8_t, 64> buf{};
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const auto now = Clock::now();
    if (now >= deadline) break;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    if (::poll(&pfd, 1, static_cast<int>(left) + 1) <= 0) continue;
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    const auto received = Clock::now();
    if (n <= 0) continue;  // e.g. ECONNREFUSED from an ICMP unreachable; keep waiting for the deadline
    auto decoded = wire::decode_response(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)));
    auto* response = std::get_if<wire::ResponsePacket>(&decoded);
    if (!response || response->nonce != request.nonce) continue;  // stale or duplicate
    return {*response, std::chrono::duration<double, std::nano>(received - start).count()};
  }
  throw wire::TimeoutError("no reply from victim within " + std::to_string(timeout_.count()) + " ms");
}

Target parse_target(std::string_view text) {
  if (text.starts_with("udp://")) text.remove_prefix(6);
  Target t;
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    t.host = std::string(text);
    return t;
  }
  t.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port == 0 || port > 65535)
    throw std::invalid_argument("invalid port in target '" + std::string(text) + "'");
  t.port = static_cast<std::uint16_t>(port);
  if (t.host.empty()) throw std::invalid_argument("empty host in target");
  return t;
}

}  // namespace nslab::udp
