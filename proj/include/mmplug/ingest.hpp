#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmplug/store.hpp"
#include "mmplug/wire.hpp"

namespace mmplug::ingest {

/// Sensor ranges enforced on every reading.
inline constexpr double kMaxWatts = 4600.0;
inline constexpr double kMinTempC = -40.0;
inline constexpr double kMaxTempC = 80.0;
inline constexpr double kMaxHumidityPct = 100.0;
inline constexpr double kMaxLux = 40000.0;

/// Reason code for a rejected reading, or nullopt when it is acceptable.
std::optional<std::string> validate(const wire::Reading& reading);

struct LatencyStats {
  std::size_t count = 0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;  ///< nearest rank
  double max_ms = 0.0;
};

/// Throws Error(State) when `latencies_ms` is empty.
LatencyStats latency_stats(std::span<const std::int64_t> latencies_ms);

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t tcp_port = 0;   ///< 0 = ephemeral
  std::uint16_t http_port = 0;  ///< 0 = ephemeral
  bool enable_http = true;
  std::filesystem::path store_path;  ///< empty = in-memory
  store::FsyncPolicy fsync = store::FsyncPolicy::None;
  std::chrono::milliseconds command_timeout{5000};
};

struct Counters {
  std::uint64_t lines = 0;
  std::uint64_t readings = 0;
  std::uint64_t stored = 0;
  std::uint64_t rejected = 0;    ///< failed range validation
  std::uint64_t malformed = 0;   ///< protocol errors; line skipped
  std::uint64_t store_errors = 0;
  std::uint64_t connections = 0;
};

/// Accepts agent streams over newline-delimited JSON, validates and stores
/// readings, relays commands, and serves the HTTP admin interface:
///   GET  /query?device=&kind=&t0=&t1=
///   GET  /latency?device=[&t0=&t1=]
///   POST /cmd  {"device":..., "cmd":..., "value":...}
///   GET  /stats
class IngestServer {
 public:
  explicit IngestServer(ServerOptions options);
  ~IngestServer();
  IngestServer(const IngestServer&) = delete;
  IngestServer& operator=(const IngestServer&) = delete;

  void start();
  void stop();

  std::uint16_t tcp_port() const;
  std::uint16_t http_port() const;

  store::DocumentStore& store();
  const store::DocumentStore& store() const;

  /// Processes one wire line outside any connection (no command routing);
  /// returns the reply line, if any.
  std::optional<std::string> handle_line(std::string_view line, std::int64_t server_ts_ms);

  /// Relays a command to the device's live connection and waits for its ack.
  /// Throws Error(NotConnected) or Error(Timeout).
  wire::Ack send_command(const std::string& device, const wire::Command& command);

  /// Latency over the device's stored readings with agent ts in [t0, t1).
  LatencyStats latency_report(const std::string& device, std::int64_t t0 = INT64_MIN,
                              std::int64_t t1 = INT64_MAX) const;

  Counters counters() const;
  std::vector<std::string> live_devices() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mmplug::ingest
