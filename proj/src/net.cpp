#include "mmplug/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "mmplug/common.hpp"

namespace mmplug::net {

namespace {

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::Network, what + ": " + std::strerror(errno));
}

}  // namespace

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<LineStream> LineStream::connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::Network, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  Socket s(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!s.valid()) {
    ::freeaddrinfo(res);
    fail("socket");
  }
  const int rc = ::connect(s.fd(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) fail("connect " + host + ":" + service);
  const int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return std::make_unique<LineStream>(std::move(s));
}

bool LineStream::write_line(std::string_view line) {
  std::lock_guard lock(write_mu_);
  if (!socket_.valid()) return false;
  std::string out(line);
  out.push_back('\n');
  std::size_t sent = 0;
  while (sent < out.size()) {
    const ssize_t n = ::send(socket_.fd(), out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::string> LineStream::read_line(std::chrono::milliseconds timeout, bool* timed_out) {
  if (timed_out) *timed_out = false;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (!socket_.valid()) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      if (timed_out) *timed_out = true;
      return std::nullopt;
    }
    pollfd p{socket_.fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) return std::nullopt;
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::recv(socket_.fd(), chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

Listener::Listener(const std::string& host, std::uint16_t port) {
  socket_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!socket_.valid()) fail("socket");
  const int one = 1;
  ::setsockopt(socket_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "bad listen address '" + host + "'");
  }
  if (::bind(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    fail("bind " + host + ":" + std::to_string(port));
  }
  if (::listen(socket_.fd(), 64) != 0) fail("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(socket_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd p{socket_.fd(), POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc <= 0 || !(p.revents & POLLIN)) return std::nullopt;
  const int fd = ::accept(socket_.fd(), nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return Socket(fd);
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must be host:port, got '" + std::string(endpoint) + "'");
  }
  unsigned port = 0;
  const auto digits = endpoint.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port == 0 || port > 65535) {
    throw Error(ErrorCode::InvalidArgument, "bad port in endpoint '" + std::string(endpoint) + "'");
  }
  return {std::string(endpoint.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

}  // namespace mmplug::net
