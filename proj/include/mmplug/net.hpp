#pragma once

#include <chrono>
#include <memory>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace mmplug::net {

/// Owns a socket file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept;
  /// Wakes up any thread blocked on this socket without releasing the fd.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

/// Line-oriented TCP connection. Reads are for one thread; writes are
/// serialised internally so several threads may send.
class LineStream {
 public:
  LineStream() = default;
  explicit LineStream(Socket socket) : socket_(std::move(socket)) {}

  static std::unique_ptr<LineStream> connect(const std::string& host, std::uint16_t port);

  /// Appends '\n'. Returns false when the peer is gone.
  bool write_line(std::string_view line);
  /// Next line without its terminator; nullopt on timeout (`timed_out` set)
  /// or on EOF/error.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout, bool* timed_out = nullptr);

  bool valid() const noexcept { return socket_.valid(); }
  void shutdown() noexcept { socket_.shutdown(); }
  void close() noexcept { socket_.close(); }

 private:
  Socket socket_;
  std::string buffer_;
  std::mutex write_mu_;
};

class Listener {
 public:
  /// Port 0 picks an ephemeral port.
  Listener(const std::string& host, std::uint16_t port);
  std::uint16_t port() const noexcept { return port_; }
  /// nullopt on timeout or after shutdown().
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void shutdown() noexcept { socket_.shutdown(); }

 private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

/// Splits "host:port"; throws Error(InvalidArgument) when malformed.
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint);

}  // namespace mmplug::net
