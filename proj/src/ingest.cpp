#include "mmplug/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "mmplug/common.hpp"
#include "mmplug/net.hpp"

namespace mmplug::ingest {

using nlohmann::json;

std::optional<std::string> validate(const wire::Reading& reading) {
  if (wire::device_of(reading).empty()) return "missing_device";
  if (wire::ts_of(reading) < 0) return "bad_timestamp";
  if (const auto* p = std::get_if<wire::PowerReading>(&reading)) {
    if (!std::isfinite(p->watts)) return "bad_value";
    if (p->watts < 0.0) return "negative_power";
    if (p->watts > kMaxWatts) return "power_out_of_range";
    return std::nullopt;
  }
  const auto& e = std::get<wire::EnvReading>(reading);
  if (!std::isfinite(e.temp_c) || e.temp_c < kMinTempC || e.temp_c > kMaxTempC) return "temp_out_of_range";
  if (!std::isfinite(e.hum_pct) || e.hum_pct < 0.0 || e.hum_pct > kMaxHumidityPct) return "humidity_out_of_range";
  if (!std::isfinite(e.lux) || e.lux < 0.0 || e.lux > kMaxLux) return "lux_out_of_range";
  return std::nullopt;
}

LatencyStats latency_stats(std::span<const std::int64_t> latencies_ms) {
  if (latencies_ms.empty()) throw Error(ErrorCode::State, "no latency records in window");
  std::vector<std::int64_t> sorted(latencies_ms.begin(), latencies_ms.end());
  std::sort(sorted.begin(), sorted.end());
  LatencyStats s;
  s.count = sorted.size();
  double sum = 0.0;
  for (auto v : sorted) sum += static_cast<double>(v);
  s.mean_ms = sum / static_cast<double>(s.count);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(s.count)));
  s.p95_ms = static_cast<double>(sorted[std::max<std::size_t>(rank, 1) - 1]);
  s.max_ms = static_cast<double>(sorted.back());
  return s;
}

struct IngestServer::Impl {
  explicit Impl(ServerOptions o) : opt(std::move(o)), store(opt.store_path, opt.fsync) {}

  ServerOptions opt;
  store::DocumentStore store;

  std::unique_ptr<net::Listener> listener;
  std::thread accept_thread;
  std::atomic<bool> running{false};

  std::mutex conns_mu;
  std::vector<std::thread> conn_threads;
  std::vector<std::shared_ptr<net::LineStream>> streams;

  mutable std::mutex sessions_mu;
  std::map<std::string, std::shared_ptr<net::LineStream>> sessions;

  std::mutex pending_mu;
  std::map<std::int64_t, std::promise<wire::Ack>> pending;
  std::atomic<std::int64_t> next_command_id{1};

  mutable std::mutex counters_mu;
  Counters counters;

  httplib::Server http;
  std::thread http_thread;
  int http_port = 0;

  void bump(std::uint64_t Counters::*field) {
    std::lock_guard lock(counters_mu);
    ++(counters.*field);
  }

  void bind_session(const std::string& device, const std::shared_ptr<net::LineStream>& stream) {
    if (!stream || device.empty()) return;
    std::lock_guard lock(sessions_mu);
    sessions[device] = stream;
  }

  std::optional<std::string> handle(std::string_view line, std::int64_t server_ts,
                                    const std::shared_ptr<net::LineStream>& stream) {
    bump(&Counters::lines);
    wire::Message msg;
    try {
      msg = wire::parse(line);
    } catch (const Error&) {
      bump(&Counters::malformed);
      return std::nullopt;
    }

    if (const auto* hello = std::get_if<wire::Hello>(&msg)) {
      bind_session(hello->device, stream);
      return std::nullopt;
    }
    if (auto* ack = std::get_if<wire::Ack>(&msg)) {
      if (ack->id) {
        std::lock_guard lock(pending_mu);
        if (const auto it = pending.find(*ack->id); it != pending.end()) {
          it->second.set_value(*ack);
          pending.erase(it);
        }
      }
      return std::nullopt;
    }
    if (std::holds_alternative<wire::Command>(msg)) {
      bump(&Counters::malformed);  // commands only flow server -> agent
      return std::nullopt;
    }

    const wire::Reading reading = std::holds_alternative<wire::PowerReading>(msg)
                                      ? wire::Reading{std::get<wire::PowerReading>(msg)}
                                      : wire::Reading{std::get<wire::EnvReading>(msg)};
    bump(&Counters::readings);
    bind_session(wire::device_of(reading), stream);
    const auto seq = std::visit([](const auto& r) { return r.seq; }, reading);

    wire::Ack reply;
    reply.of = seq ? json(*seq) : json(nullptr);
    if (auto reason = validate(reading)) {
      bump(&Counters::rejected);
      reply.ok = false;
      reply.reason = *reason;
    } else {
      try {
        const auto doc = store.put(reading, server_ts);
        bump(&Counters::stored);
        reply.doc_id = doc.doc_id;
        reply.rev = doc.rev;
      } catch (const Error& e) {
        bump(&Counters::store_errors);
        reply.ok = false;
        reply.reason = "store_error";
      }
    }
    return wire::encode(reply);
  }

  void serve_connection(std::shared_ptr<net::LineStream> stream) {
    while (running) {
      bool timed_out = false;
      const auto line = stream->read_line(std::chrono::milliseconds(200), &timed_out);
      if (!line) {
        if (timed_out) continue;
        break;
      }
      if (line->empty()) continue;
      const auto reply = handle(*line, wall_clock_ms(), stream);
      if (reply && !stream->write_line(*reply)) break;
    }
    std::lock_guard lock(sessions_mu);
    for (auto it = sessions.begin(); it != sessions.end();) {
      it = it->second == stream ? sessions.erase(it) : std::next(it);
    }
  }

  void accept_loop() {
    while (running) {
      auto sock = listener->accept(std::chrono::milliseconds(200));
      if (!sock) continue;
      auto stream = std::make_shared<net::LineStream>(std::move(*sock));
      bump(&Counters::connections);
      std::lock_guard lock(conns_mu);
      streams.push_back(stream);
      conn_threads.emplace_back([this, stream] { serve_connection(stream); });
    }
  }

  void install_http_routes(IngestServer& self);
};

namespace {

std::int64_t param_or(const httplib::Request& req, const char* name, std::int64_t fallback) {
  if (!req.has_param(name)) return fallback;
  return std::stoll(req.get_param_value(name));
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json ack_json(const wire::Ack& ack) { return json::parse(wire::encode(ack)); }

}  // namespace

void IngestServer::Impl::install_http_routes(IngestServer& self) {
  http.Get("/query", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_param("device")) return reply_json(res, 400, {{"error", "device parameter required"}});
      const std::string device = req.get_param_value("device");
      const std::string kind = req.has_param("kind") ? req.get_param_value("kind") : "power";
      const auto docs = store.query(device, kind, param_or(req, "t0", INT64_MIN), param_or(req, "t1", INT64_MAX));
      json arr = json::array();
      for (const auto& d : docs) arr.push_back(d.to_json());
      reply_json(res, 200, {{"device", device}, {"kind", kind}, {"count", docs.size()}, {"documents", arr}});
    } catch (const std::exception& e) {
      reply_json(res, 400, {{"error", e.what()}});
    }
  });
  http.Get("/latency", [&self](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_param("device")) return reply_json(res, 400, {{"error", "device parameter required"}});
      const std::string device = req.get_param_value("device");
      const auto s = self.latency_report(device, param_or(req, "t0", INT64_MIN), param_or(req, "t1", INT64_MAX));
      reply_json(res, 200,
                 {{"device", device}, {"count", s.count}, {"mean_ms", s.mean_ms}, {"p95_ms", s.p95_ms}, {"max_ms", s.max_ms}});
    } catch (const Error& e) {
      reply_json(res, e.code() == ErrorCode::State ? 404 : 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      reply_json(res, 400, {{"error", e.what()}});
    }
  });
  http.Post("/cmd", [&self](const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("device") || !body.contains("cmd") ||
        !body["device"].is_string() || !body["cmd"].is_string()) {
      return reply_json(res, 400, {{"error", "body must be {\"device\":..., \"cmd\":...}"}});
    }
    const double value = body.contains("value") && body["value"].is_number() ? body["value"].get<double>() : 0.0;
    try {
      const auto ack = self.send_command(body["device"].get<std::string>(),
                                         wire::make_command(body["cmd"].get<std::string>(), value));
      reply_json(res, 200, {{"ok", ack.ok}, {"ack", ack_json(ack)}});
    } catch (const Error& e) {
      const int status = e.code() == ErrorCode::NotConnected ? 404 : e.code() == ErrorCode::Timeout ? 504 : 500;
      reply_json(res, status, {{"error", to_string(e.code())}, {"detail", e.what()}});
    }
  });
  http.Get("/stats", [&self](const httplib::Request&, httplib::Response& res) {
    const auto c = self.counters();
    reply_json(res, 200,
               {{"lines", c.lines}, {"readings", c.readings}, {"stored", c.stored}, {"rejected", c.rejected},
                {"malformed", c.malformed}, {"store_errors", c.store_errors}, {"connections", c.connections},
                {"documents", self.store().document_count()}, {"live_devices", self.live_devices()}});
  });
}

IngestServer::IngestServer(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

IngestServer::~IngestServer() { stop(); }

void IngestServer::start() {
  if (impl_->running) return;
  impl_->listener = std::make_unique<net::Listener>(impl_->opt.host, impl_->opt.tcp_port);
  impl_->running = true;
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });

  if (impl_->opt.enable_http) {
    impl_->install_http_routes(*this);
    if (impl_->opt.http_port == 0) {
      impl_->http_port = impl_->http.bind_to_any_port(impl_->opt.host);
    } else if (impl_->http.bind_to_port(impl_->opt.host, impl_->opt.http_port)) {
      impl_->http_port = impl_->opt.http_port;
    } else {
      impl_->http_port = -1;
    }
    if (impl_->http_port <= 0) {
      stop();
      throw Error(ErrorCode::Network, "cannot bind HTTP admin port " + std::to_string(impl_->opt.http_port));
    }
    impl_->http_thread = std::thread([this] { impl_->http.listen_after_bind(); });
  }
}

void IngestServer::stop() {
  if (!impl_) return;
  const bool was_running = impl_->running.exchange(false);
  if (impl_->http_thread.joinable()) {
    impl_->http.stop();
    impl_->http_thread.join();
  }
  if (!was_running) return;
  if (impl_->listener) impl_->listener->shutdown();
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(impl_->conns_mu);
    for (auto& s : impl_->streams) s->shutdown();
    threads.swap(impl_->conn_threads);
  }
  for (auto& t : threads) t.join();
  std::lock_guard lock(impl_->conns_mu);
  impl_->streams.clear();
}

std::uint16_t IngestServer::tcp_port() const { return impl_->listener ? impl_->listener->port() : 0; }
std::uint16_t IngestServer::http_port() const { return static_cast<std::uint16_t>(std::max(0, impl_->http_port)); }

store::DocumentStore& IngestServer::store() { return impl_->store; }
const store::DocumentStore& IngestServer::store() const { return impl_->store; }

std::optional<std::string> IngestServer::handle_line(std::string_view line, std::int64_t server_ts_ms) {
  return impl_->handle(line, server_ts_ms, nullptr);
}

wire::Ack IngestServer::send_command(const std::string& device, const wire::Command& command) {
  std::shared_ptr<net::LineStream> stream;
  {
    std::lock_guard lock(impl_->sessions_mu);
    const auto it = impl_->sessions.find(device);
    if (it != impl_->sessions.end()) stream = it->second;
  }
  if (!stream) throw Error(ErrorCode::NotConnected, "no live session for device '" + device + "'");

  wire::Command cmd = command;
  cmd.id = impl_->next_command_id++;
  std::future<wire::Ack> reply;
  {
    std::lock_guard lock(impl_->pending_mu);
    reply = impl_->pending[cmd.id].get_future();
  }
  auto forget = [&] {
    std::lock_guard lock(impl_->pending_mu);
    impl_->pending.erase(cmd.id);
  };
  if (!stream->write_line(wire::encode(cmd))) {
    forget();
    throw Error(ErrorCode::NotConnected, "session for device '" + device + "' closed");
  }
  if (reply.wait_for(impl_->opt.command_timeout) != std::future_status::ready) {
    forget();
    throw Error(ErrorCode::Timeout, "no ack from '" + device + "' within " +
                                        std::to_string(impl_->opt.command_timeout.count()) + " ms");
  }
  return reply.get();
}

LatencyStats IngestServer::latency_report(const std::string& device, std::int64_t t0, std::int64_t t1) const {
  std::vector<std::int64_t> lat;
  for (const char* kind : {"power", "env"}) {
    for (const auto& d : impl_->store.query(device, kind, t0, t1)) lat.push_back(d.server_ts_ms - d.ts_ms());
  }
  return latency_stats(lat);
}

Counters IngestServer::counters() const {
  std::lock_guard lock(impl_->counters_mu);
  return impl_->counters;
}

std::vector<std::string> IngestServer::live_devices() const {
  std::lock_guard lock(impl_->sessions_mu);
  std::vector<std::string> out;
  for (const auto& [device, stream] : impl_->sessions) out.push_back(device);
  return out;
}

}  // namespace mmplug::ingest
