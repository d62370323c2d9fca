#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "json.hpp"

// Newline-delimited JSON spoken between edge agents and the ingestion
// service. One UTF-8 object per line; unknown extra fields are ignored.
namespace mmplug::wire {

struct PowerReading {
  std::string device;
  std::int64_t ts_ms = 0;
  double watts = 0.0;
  std::optional<std::int64_t> seq;  ///< echoed in the server's ack
};

struct EnvReading {
  std::string device;
  std::int64_t ts_ms = 0;
  double temp_c = 0.0;
  double hum_pct = 0.0;
  double lux = 0.0;
  bool occupied = false;
  std::optional<std::int64_t> seq;
};

using Reading = std::variant<PowerReading, EnvReading>;

enum class CommandKind { RelayOn, RelayOff, SetRate, Unknown };

struct Command {
  CommandKind kind = CommandKind::Unknown;
  std::string name;  ///< wire name, kept verbatim for unknown commands
  double value = 0.0;
  std::int64_t id = 0;
};

/// `of` is the reading's seq for reading acks and the command name for
/// command acks.
struct Ack {
  nlohmann::json of;
  bool ok = true;
  std::string reason;
  std::optional<std::int64_t> id;
  std::string doc_id;
  int rev = 0;
};

/// Sent once by an agent after connecting so the server can route commands.
struct Hello {
  std::string device;
};

using Message = std::variant<PowerReading, EnvReading, Command, Ack, Hello>;

const char* command_name(CommandKind kind) noexcept;
Command make_command(std::string_view name, double value = 0.0);

/// Throws Error(Protocol) for malformed JSON, unknown kinds and missing or
/// mistyped fields.
Message parse(std::string_view line);

/// Serialises without the trailing newline.
std::string encode(const Message& message);
nlohmann::json to_json(const Reading& reading);

const std::string& device_of(const Reading& r);
std::int64_t ts_of(const Reading& r);
const char* kind_of(const Reading& r);

}  // namespace mmplug::wire
