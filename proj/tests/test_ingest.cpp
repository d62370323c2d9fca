#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "mmplug/common.hpp"
#include "mmplug/ingest.hpp"
#include "mmplug/net.hpp"

using namespace mmplug;
using namespace mmplug::ingest;
using namespace std::chrono_literals;
using wire::EnvReading;
using wire::PowerReading;

namespace {

EnvReading env(double t, double h, double lux) { return {"e", 1, t, h, lux, true, {}}; }

ServerOptions local(std::chrono::milliseconds timeout = 1000ms) {
  ServerOptions o;
  o.command_timeout = timeout;
  return o;
}

std::unique_ptr<net::LineStream> connect_as(const IngestServer& s, const std::string& device) {
  auto c = net::LineStream::connect("127.0.0.1", s.tcp_port());
  REQUIRE(c->write_line(wire::encode(wire::Hello{device})));
  return c;
}

nlohmann::json reply(net::LineStream& c) {
  const auto line = c.read_line(2000ms);
  REQUIRE(line.has_value());
  return nlohmann::json::parse(*line);
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("range validation reason codes") {
  CHECK_FALSE(validate(env(25.0, 50.0, 300.0)).has_value());
  CHECK(validate(env(120.0, 50.0, 300.0)) == "temp_out_of_range");
  CHECK(validate(env(-41.0, 50.0, 300.0)) == "temp_out_of_range");
  CHECK_FALSE(validate(env(80.0, 100.0, 40000.0)).has_value());
  CHECK_FALSE(validate(env(-40.0, 0.0, 0.0)).has_value());
  CHECK(validate(env(20.0, 100.5, 1.0)) == "humidity_out_of_range");
  CHECK(validate(env(20.0, -1.0, 1.0)) == "humidity_out_of_range");
  CHECK(validate(env(20.0, 50.0, 40001.0)) == "lux_out_of_range");
  CHECK(validate(env(20.0, 50.0, -0.5)) == "lux_out_of_range");

  CHECK_FALSE(validate(PowerReading{"p", 1, 0.0, {}}).has_value());
  CHECK_FALSE(validate(PowerReading{"p", 1, 4600.0, {}}).has_value());
  CHECK(validate(PowerReading{"p", 1, -1.0, {}}) == "negative_power");
  CHECK(validate(PowerReading{"p", 1, 4600.5, {}}) == "power_out_of_range");
  CHECK(validate(PowerReading{"p", 1, std::nan(""), {}}) == "bad_value");
  CHECK(validate(PowerReading{"", 1, 1.0, {}}) == "missing_device");
  CHECK(validate(PowerReading{"p", -5, 1.0, {}}) == "bad_timestamp");
}

TEST_CASE("latency statistics") {
  const std::vector<std::int64_t> flat(20, 100);
  const auto s = latency_stats(flat);
  CHECK(s.count == 20);
  CHECK(s.mean_ms == 100.0);
  CHECK(s.p95_ms == 100.0);
  CHECK(s.max_ms == 100.0);

  std::vector<std::int64_t> ramp;
  for (int i = 1; i <= 100; ++i) ramp.push_back(i);
  const auto r = latency_stats(ramp);
  CHECK(r.p95_ms == 95.0);
  CHECK(r.mean_ms == 50.5);
  CHECK(latency_stats(std::vector<std::int64_t>{7}).p95_ms == 7.0);
  try {
    latency_stats(std::vector<std::int64_t>{});
    FAIL("empty window accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
  }
}

TEST_CASE("handle_line: store, reject, skip malformed") {
  IngestServer s(local());
  const auto ok = nlohmann::json::parse(*s.handle_line(R"({"kind":"power","device":"p","ts_ms":10,"watts":5,"seq":1})", 110));
  CHECK(ok["ok"] == true);
  CHECK(ok["of"] == 1);
  CHECK(ok["doc_id"] == "p:power:10");
  CHECK(ok["rev"] == 1);
  const auto bad = nlohmann::json::parse(
      *s.handle_line(R"({"kind":"env","device":"p","ts_ms":10,"temp_c":120,"hum_pct":3,"lux":4,"occupied":true})", 0));
  CHECK(bad["ok"] == false);
  CHECK(bad["reason"] == "temp_out_of_range");
  CHECK_FALSE(s.handle_line("garbage", 0).has_value());

  const auto c = s.counters();
  CHECK(c.lines == 3);
  CHECK(c.readings == 2);
  CHECK(c.stored == 1);
  CHECK(c.rejected == 1);
  CHECK(c.malformed == 1);
  CHECK(c.readings - c.rejected == s.store().document_count());
  const auto lat = s.latency_report("p");
  CHECK(lat.count == 1);
  CHECK(lat.mean_ms == 100.0);
  CHECK_THROWS_AS(s.latency_report("nobody"), Error);
}

TEST_CASE("tcp session: readings, malformed lines and commands") {
  IngestServer s(local(300ms));
  s.start();
  auto c = connect_as(s, "plug-x");

  c->write_line(wire::encode(PowerReading{"plug-x", wall_clock_ms(), 42.0, 1}));
  CHECK(reply(*c)["of"] == 1);
  c->write_line("{\"kind\":");  // connection survives
  c->write_line(wire::encode(PowerReading{"plug-x", wall_clock_ms() + 1, 4700.0, 2}));
  const auto rej = reply(*c);
  CHECK(rej["ok"] == false);
  CHECK(rej["reason"] == "power_out_of_range");

  // command relayed to the device and answered by it
  std::thread device([&] {
    const auto line = c->read_line(2000ms);
    REQUIRE(line.has_value());
    const auto cmd = std::get<wire::Command>(wire::parse(*line));
    CHECK(cmd.kind == wire::CommandKind::RelayOff);
    wire::Ack a;
    a.of = "relay_off";
    a.id = cmd.id;
    c->write_line(wire::encode(a));
  });
  const auto ack = s.send_command("plug-x", wire::make_command("relay_off"));
  device.join();
  CHECK(ack.ok);

  try {
    s.send_command("ghost", wire::make_command("relay_off"));
    FAIL("command to unknown device succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotConnected);
  }
  try {
    s.send_command("plug-x", wire::make_command("relay_on"));  // nobody answers
    FAIL("unanswered command succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Timeout);
  }

  const auto counters = s.counters();
  CHECK(counters.malformed == 1);
  CHECK(counters.stored == 1);
  CHECK(counters.connections == 1);
  c->close();
  s.stop();
}

TEST_CASE("http admin routes") {
  IngestServer s(local(300ms));
  s.start();
  for (int t = 0; t < 10; ++t) {
    s.handle_line(wire::encode(PowerReading{"h", 1000 + t, double(t), {}}), 1000 + t + 50);
  }
  httplib::Client cli("127.0.0.1", s.http_port());

  auto r = cli.Get("/query?device=h&kind=power&t0=1003&t1=1007");
  REQUIRE(r);
  CHECK(r->status == 200);
  auto j = nlohmann::json::parse(r->body);
  CHECK(j["count"] == 4);
  CHECK(j["documents"].size() == 4);
  CHECK(j["documents"][0]["body"]["ts_ms"] == 1003);

  r = cli.Get("/query?device=h&t0=abc");
  REQUIRE(r);
  CHECK(r->status == 400);

  r = cli.Get("/latency?device=h");
  REQUIRE(r);
  CHECK(r->status == 200);
  j = nlohmann::json::parse(r->body);
  CHECK(j["mean_ms"] == 50.0);
  CHECK(j["count"] == 10);

  r = cli.Get("/latency?device=nobody");
  REQUIRE(r);
  CHECK(r->status == 404);

  r = cli.Post("/cmd", R"({"device":"ghost","cmd":"relay_off"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 404);
  r = cli.Post("/cmd", "not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);

  r = cli.Get("/stats");
  REQUIRE(r);
  j = nlohmann::json::parse(r->body);
  CHECK(j["stored"] == 10);
  CHECK(j["documents"] == 10);
  s.stop();
}

TEST_CASE("many concurrent connections") {
  IngestServer s(local());
  s.start();
  std::vector<std::thread> agents;
  for (int a = 0; a < 8; ++a) {
    agents.emplace_back([&, a] {
      auto c = net::LineStream::connect("127.0.0.1", s.tcp_port());
      const std::string dev = "c" + std::to_string(a);
      c->write_line(wire::encode(wire::Hello{dev}));
      for (int i = 0; i < 50; ++i) c->write_line(wire::encode(PowerReading{dev, 10'000 + i, 1.0, i}));
      for (int i = 0; i < 50; ++i) REQUIRE(c->read_line(2000ms).has_value());
    });
  }
  for (auto& t : agents) t.join();
  CHECK(s.store().document_count() == 400);
  CHECK(s.counters().connections == 8);
  s.stop();
}

}
