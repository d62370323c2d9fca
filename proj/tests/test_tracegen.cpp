#include <numeric>
#include <sstream>

#include "doctest.h"
#include "mmplug/common.hpp"
#include "mmplug/features.hpp"
#include "mmplug/tracegen.hpp"

using namespace mmplug;
using namespace mmplug::tracegen;

namespace {

ApplianceModel plain(double watts) {
  ApplianceModel m;
  m.name = "plain";
  m.steady_watts = watts;
  m.transient_peak_watts = watts;
  return m;
}

TraceOptions opts(double duration, double rate, std::uint64_t seed = 1) {
  TraceOptions o;
  o.duration_s = duration;
  o.sample_rate_hz = rate;
  o.seed = seed;
  return o;
}

}  // namespace

TEST_SUITE("tracegen") {

TEST_CASE("zero model yields an all-zero trace") {
  const auto t = generate_trace(plain(0.0), {0, 5.0, 25.0}, opts(30.0, 2.0));
  CHECK(t.samples.size() == 60);
  for (double v : t.samples) CHECK(v == 0.0);
}

TEST_CASE("noise-free step is exact") {
  const auto t = generate_trace(plain(60.0), {0, 10.0, 20.0}, opts(30.0, 1.0));
  REQUIRE(t.samples.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) CHECK(t.samples[i] == (i >= 10 && i < 20 ? 60.0 : 0.0));
}

TEST_CASE("on-interval mean obeys the 3 sigma / sqrt(n) bound") {
  auto m = plain(60.0);
  m.noise_sigma_watts = 1.0;
  const auto t = generate_trace(m, {0, 0.0, 500.0}, opts(500.0, 1.0, 42));
  REQUIRE(t.samples.size() == 500);
  const double mean = std::accumulate(t.samples.begin(), t.samples.end(), 0.0) / 500.0;
  CHECK(std::abs(mean - 60.0) <= 3.0 / std::sqrt(500.0));
  CHECK(std::abs(mean - 60.0) <= 0.5);
}

TEST_CASE("length is floor(duration * rate) and samples are non-negative") {
  auto m = plain(3.0);
  m.noise_sigma_watts = 5.0;
  for (double rate : {0.5, 1.0, 2.0, 3.3}) {
    const auto t = generate_trace(m, {0, 1.0, 7.0}, opts(10.0, rate));
    CHECK(t.samples.size() == static_cast<std::size_t>(std::floor(10.0 * rate)));
    for (double v : t.samples) CHECK(v >= 0.0);
  }
}

TEST_CASE("same inputs give bit-identical traces") {
  auto m = default_fleet()[3];
  const auto a = generate_trace(m, {3, 10.0, 50.0}, opts(120.0, 2.0, 9));
  const auto b = generate_trace(m, {3, 10.0, 50.0}, opts(120.0, 2.0, 9));
  CHECK(a.samples == b.samples);
  const auto c = generate_trace(m, {3, 10.0, 50.0}, opts(120.0, 2.0, 10));
  CHECK(a.samples != c.samples);
}

TEST_CASE("bad schedule entries are rejected") {
  CHECK_THROWS_AS(generate_trace(plain(1.0), {0, 20.0, 10.0}, opts(30.0, 1.0)), Error);
  Schedule s{{{0, 5.0, 10.0}, {1, 8.0, 12.0}}, 20.0, 1.0};
  CHECK_NOTHROW(s.validate());
  s.entries = {{1, 8.0, 12.0}, {0, 5.0, 10.0}};
  try {
    s.validate();
    FAIL("unsorted entries accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Schedule);
  }
  s.entries = {{0, 1.0, 25.0}};
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("appliance model domain checks") {
  auto m = plain(100.0);
  m.transient_peak_watts = 50.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = plain(10.0);
  m.ripple_period_s = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = plain(10.0);
  m.noise_sigma_watts = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("superpose identities") {
  auto m = default_fleet()[1];
  const auto a = generate_trace(m, {1, 5.0, 40.0}, opts(60.0, 2.0, 1));
  const auto b = generate_trace(default_fleet()[2], {2, 20.0, 50.0}, opts(60.0, 2.0, 2));
  const auto zero = generate_trace(plain(0.0), {0, 0.0, 1.0}, opts(60.0, 2.0));

  CHECK(superpose(std::vector{a}).samples == a.samples);
  CHECK(superpose(std::vector{zero, a}).samples == a.samples);
  CHECK(superpose(std::vector{a, b}).samples == superpose(std::vector{b, a}).samples);

  const auto aa = superpose(std::vector{a, a});
  CHECK(features::rms(aa.samples) == doctest::Approx(2.0 * features::rms(a.samples)).epsilon(1e-12));

  auto shifted = b;
  shifted.t0_ms += 1;
  try {
    superpose(std::vector{a, shifted});
    FAIL("misaligned traces accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Alignment);
  }
}

TEST_CASE("dataset has C x n segments, grouped and deterministic") {
  const auto fleet = default_fleet();
  REQUIRE(fleet.size() == 5);
  const auto ds = generate_dataset(fleet, 40, SegmentConfig{}, 42);
  CHECK(ds.size() == 200);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds[i].segment_id == static_cast<int>(i));
    CHECK(ds[i].class_id == static_cast<int>(i / 40));
    CHECK(ds[i].trace.samples.size() == 240);
  }
  const auto again = generate_dataset(fleet, 40, SegmentConfig{}, 42);
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(ds[i].trace.samples == again[i].trace.samples);
}

TEST_CASE("default fleet has disjoint steady power") {
  const auto fleet = default_fleet();
  for (std::size_t i = 1; i < fleet.size(); ++i) {
    CHECK(fleet[i].steady_watts > fleet[i - 1].steady_watts);
    CHECK(fleet[i].class_id == static_cast<int>(i));
  }
}

TEST_CASE("dataset csv round trip") {
  const auto ds = generate_dataset(default_fleet(), 2, SegmentConfig{}, 3);
  std::stringstream buf;
  write_dataset_csv(buf, ds);
  std::string header;
  std::getline(std::stringstream(buf.str()), header);
  CHECK(header == "segment_id,class_id,sample_index,watts");
  const auto back = read_dataset_csv(buf, 2.0);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back[i].class_id == ds[i].class_id);
    CHECK(back[i].trace.samples == ds[i].trace.samples);
  }
  std::stringstream bad("segment_id,class_id,sample_index,watts\n0,0,0,abc\n");
  CHECK_THROWS_AS(read_dataset_csv(bad, 2.0), Error);
}

}
