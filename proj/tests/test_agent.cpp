#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "mmplug/common.hpp"
#include "mmplug/edge_agent.hpp"
#include "mmplug/ingest.hpp"
#include "mmplug/net.hpp"

using namespace mmplug;
using namespace mmplug::agent;
using namespace std::chrono_literals;

namespace {

double variance(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / double(x.size());
}

AgentConfig fast(const std::string& id) {
  AgentConfig c;
  c.device_id = id;
  c.duration_s = 20.0;
  c.sample_rate_hz = 1.0;
  c.time_scale = 20.0;
  c.processing_delay_s = 0.01;
  c.network_latency_s = 0.05;
  c.jitter_s = 0.01;
  return c;
}

}  // namespace

TEST_SUITE("agent") {

TEST_CASE("preprocess identity, constants and counts") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(50.0, 3.0);
  std::vector<double> raw(100);
  for (auto& v : raw) v = n(rng);
  CHECK(preprocess(raw, {}) == raw);
  const std::vector<double> flat(37, 12.5);
  for (double v : preprocess(flat, {5, 3, -1})) CHECK(v == doctest::Approx(12.5).epsilon(1e-15));
  CHECK(preprocess(raw, {1, 4, -1}).size() == 25);
  for (std::size_t n_raw : {1u, 7u, 99u, 100u}) {
    for (std::size_t f : {1u, 2u, 3u, 10u}) {
      const auto out = preprocess(std::span(raw).first(n_raw), {3, f, 2});
      CHECK(out.size() == (n_raw + f - 1) / f);
      CHECK(out.size() <= n_raw);
    }
  }
  CHECK(preprocess(std::vector{1.234567}, {1, 1, 2})[0] == 1.23);
  Preprocessing bad{0, 1, -1};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("smoothing does not increase noise variance") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 2.0);
  for (std::size_t w : {2u, 3u, 5u, 9u}) {
    std::vector<double> raw(2000);
    for (auto& v : raw) v = n(rng);
    CHECK(variance(preprocess(raw, {w, 1, -1})) <= variance(raw));
  }
}

TEST_CASE("presets") {
  const auto esp = find_preset("esp32");
  const auto mkr = find_preset("mkr1010");
  REQUIRE(esp);
  REQUIRE(mkr);
  CHECK(esp->processing_delay_s == 0.16);
  CHECK(esp->network_latency_s == 3.19);
  CHECK(mkr->processing_delay_s == 1.05);
  CHECK(mkr->network_latency_s == 2.25);
  CHECK_FALSE(find_preset("avr").has_value());
  AgentConfig c;
  c.apply_preset(*mkr);
  CHECK(c.network_latency_s == 2.25);
}

TEST_CASE("config validation") {
  AgentConfig c;
  CHECK_NOTHROW(c.validate());
  c.sample_rate_hz = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.network_latency_s = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.preprocessing.downsample_factor = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("relay commands are idempotent and rates validated") {
  EdgeAgent a(fast("cmd"));
  CHECK(a.relay_on());
  const auto off1 = a.handle_command(wire::make_command("relay_off"));
  const auto off2 = a.handle_command(wire::make_command("relay_off"));
  CHECK(off1.ok);
  CHECK(off2.ok);
  CHECK_FALSE(a.relay_on());
  CHECK(a.handle_command(wire::make_command("relay_on")).ok);
  CHECK(a.relay_on());

  const auto zero = a.handle_command(wire::make_command("set_rate", 0.0));
  CHECK_FALSE(zero.ok);
  CHECK(zero.reason == "invalid_rate");
  CHECK(a.handle_command(wire::make_command("set_rate", 4.0)).ok);
  CHECK(a.output_rate_hz() == 4.0);

  auto unknown = wire::make_command("self_destruct");
  unknown.id = 9;
  const auto ack = a.handle_command(unknown);
  CHECK_FALSE(ack.ok);
  CHECK(ack.reason == "unknown_command");
  CHECK(ack.id == 9);
}

TEST_CASE("built-in trace length follows preprocessing") {
  auto c = fast("len");
  c.duration_s = 60.0;
  CHECK(EdgeAgent(c).reduced_power().size() == 60);
  c.preprocessing.downsample_factor = 4;
  CHECK(EdgeAgent(c).reduced_power().size() == 15);
  const std::vector<double> raw(10, 3.0);
  CHECK(EdgeAgent(c, raw).reduced_power().size() == 3);
}

TEST_CASE("environment samples stay in sensor ranges") {
  EnvSimulator sim(3, 600.0);
  for (int i = 0; i < 2000; ++i) {
    const auto e = sim.sample("d", i * 1.0, i * 1000);
    CHECK(e.temp_c >= -40.0);
    CHECK(e.temp_c <= 80.0);
    CHECK(e.hum_pct >= 0.0);
    CHECK(e.hum_pct <= 100.0);
    CHECK((e.lux == 0.0 || (e.lux >= 0.1 && e.lux <= 40000.0)));
  }
}

TEST_CASE("session against a live server") {
  ingest::IngestServer s({});
  s.start();
  auto cfg = fast("live");
  cfg.env_every = 4;
  EdgeAgent a(cfg);
  const auto st = a.run("127.0.0.1", s.tcp_port());
  s.stop();

  CHECK_FALSE(st.failed);
  CHECK(st.sent_power == 20);
  CHECK(st.sent_env == 5);
  CHECK(st.acked == 25);
  CHECK(st.rejected == 0);
  const auto power = s.store().query("live", "power", INT64_MIN, INT64_MAX);
  REQUIRE(power.size() == 20);
  for (std::size_t i = 1; i < power.size(); ++i) CHECK(power[i].ts_ms() > power[i - 1].ts_ms());
  for (std::size_t i = 0; i < power.size(); ++i) CHECK(power[i].body["watts"] == a.reduced_power()[i]);
  const auto lat = s.latency_report("live");
  CHECK(lat.mean_ms == doctest::Approx(50.0).epsilon(0.5));
}

TEST_CASE("relay off mid-session zeroes later power") {
  ingest::IngestServer s({});
  s.start();
  auto cfg = fast("relay");
  cfg.duration_s = 40.0;
  cfg.time_scale = 10.0;
  cfg.appliance_class = 4;
  EdgeAgent a(cfg);
  std::int64_t applied_at = 0;
  std::thread controller([&] {
    std::this_thread::sleep_for(1500ms);
    const auto ack = s.send_command("relay", wire::make_command("relay_off"));
    CHECK(ack.ok);
    applied_at = wall_clock_ms();
  });
  const auto st = a.run("127.0.0.1", s.tcp_port());
  controller.join();
  s.stop();
  CHECK(st.commands == 1);
  const auto power = s.store().query("relay", "power", INT64_MIN, INT64_MAX);
  std::size_t after = 0;
  for (const auto& d : power) {
    if (d.ts_ms() > applied_at) {
      ++after;
      CHECK(d.body["watts"] == 0.0);
    }
  }
  CHECK(after > 0);
}

TEST_CASE("unreachable server fails after bounded retries") {
  std::uint16_t dead_port;
  {
    net::Listener l("127.0.0.1", 0);
    dead_port = l.port();
  }
  auto cfg = fast("lonely");
  cfg.max_retries = 2;
  cfg.backoff_ms = 10;
  EdgeAgent a(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const auto st = a.run("127.0.0.1", dead_port);
  CHECK(st.failed);
  CHECK_FALSE(st.error.empty());
  CHECK(std::chrono::steady_clock::now() - t0 < 10s);
}

}
