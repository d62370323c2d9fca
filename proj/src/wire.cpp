#include "mmplug/wire.hpp"

#include <cmath>

#include "mmplug/common.hpp"

namespace mmplug::wire {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::Protocol, what); }

const json& field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end()) bad(std::string("missing field '") + name + "'");
  return *it;
}

std::string text(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_string()) bad(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

double number(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (!v.is_number()) bad(std::string("field '") + name + "' must be a number");
  return v.get<double>();
}

std::int64_t integer(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d) && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
  }
  bad(std::string("field '") + name + "' must be an integer");
}

std::optional<std::int64_t> optional_integer(const json& j, const char* name) {
  if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
  return integer(j, name);
}

bool boolean(const json& j, const char* name) {
  const auto& v = field(j, name);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) return v.get<std::int64_t>() != 0;
  bad(std::string("field '") + name + "' must be a boolean");
}

}  // namespace

const char* command_name(CommandKind kind) noexcept {
  switch (kind) {
    case CommandKind::RelayOn: return "relay_on";
    case CommandKind::RelayOff: return "relay_off";
    case CommandKind::SetRate: return "set_rate";
    case CommandKind::Unknown: return "unknown";
  }
  return "unknown";
}

Command make_command(std::string_view name, double value) {
  Command c;
  c.name = std::string(name);
  c.value = value;
  if (name == "relay_on" || name == "on") {
    c.kind = CommandKind::RelayOn;
  } else if (name == "relay_off" || name == "off") {
    c.kind = CommandKind::RelayOff;
  } else if (name == "set_rate") {
    c.kind = CommandKind::SetRate;
  }
  if (c.kind != CommandKind::Unknown) c.name = command_name(c.kind);
  return c;
}

Message parse(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded()) bad("malformed JSON");
  if (!j.is_object()) bad("message must be a JSON object");
  const std::string kind = text(j, "kind");

  if (kind == "power") {
    return PowerReading{text(j, "device"), integer(j, "ts_ms"), number(j, "watts"), optional_integer(j, "seq")};
  }
  if (kind == "env") {
    return EnvReading{text(j, "device"),   integer(j, "ts_ms"),     number(j, "temp_c"),
                      number(j, "hum_pct"), number(j, "lux"),        boolean(j, "occupied"),
                      optional_integer(j, "seq")};
  }
  if (kind == "cmd") {
    Command c = make_command(text(j, "cmd"), j.contains("value") && j["value"].is_number() ? j["value"].get<double>() : 0.0);
    c.id = optional_integer(j, "id").value_or(0);
    return c;
  }
  if (kind == "ack") {
    Ack a;
    a.of = field(j, "of");
    a.ok = boolean(j, "ok");
    if (j.contains("reason") && j["reason"].is_string()) a.reason = j["reason"].get<std::string>();
    a.id = optional_integer(j, "id");
    if (j.contains("doc_id") && j["doc_id"].is_string()) a.doc_id = j["doc_id"].get<std::string>();
    if (j.contains("rev") && j["rev"].is_number_integer()) a.rev = j["rev"].get<int>();
    return a;
  }
  if (kind == "hello") return Hello{text(j, "device")};
  bad("unknown message kind '" + kind + "'");
}

json to_json(const Reading& reading) {
  return std::visit(
      [](const auto& r) -> json {
        using T = std::decay_t<decltype(r)>;
        json j;
        if constexpr (std::is_same_v<T, PowerReading>) {
          j = {{"kind", "power"}, {"device", r.device}, {"ts_ms", r.ts_ms}, {"watts", r.watts}};
        } else {
          j = {{"kind", "env"},        {"device", r.device}, {"ts_ms", r.ts_ms}, {"temp_c", r.temp_c},
               {"hum_pct", r.hum_pct}, {"lux", r.lux},       {"occupied", r.occupied}};
        }
        if (r.seq) j["seq"] = *r.seq;
        return j;
      },
      reading);
}

std::string encode(const Message& message) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PowerReading> || std::is_same_v<T, EnvReading>) {
          return to_json(Reading{m}).dump();
        } else if constexpr (std::is_same_v<T, Command>) {
          return json{{"kind", "cmd"}, {"cmd", m.name}, {"value", m.value}, {"id", m.id}}.dump();
        } else if constexpr (std::is_same_v<T, Ack>) {
          json j{{"kind", "ack"}, {"of", m.of}, {"ok", m.ok}};
          if (!m.reason.empty()) j["reason"] = m.reason;
          if (m.id) j["id"] = *m.id;
          if (!m.doc_id.empty()) {
            j["doc_id"] = m.doc_id;
            j["rev"] = m.rev;
          }
          return j.dump();
        } else {
          return json{{"kind", "hello"}, {"device", m.device}}.dump();
        }
      },
      message);
}

const std::string& device_of(const Reading& r) {
  return std::visit([](const auto& x) -> const std::string& { return x.device; }, r);
}

std::int64_t ts_of(const Reading& r) {
  return std::visit([](const auto& x) { return x.ts_ms; }, r);
}

const char* kind_of(const Reading& r) { return std::holds_alternative<PowerReading>(r) ? "power" : "env"; }

}  // namespace mmplug::wire
