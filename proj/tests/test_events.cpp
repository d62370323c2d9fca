#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mmplug/common.hpp"
#include "mmplug/events.hpp"

using namespace mmplug;
using namespace mmplug::events;

namespace {

std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * std::numbers::pi * double(k * t % n) / double(n);
      acc += x[t] * std::polar(1.0, ang);
    }
    out[k] = inverse ? acc / double(n) : acc;
  }
  return out;
}

std::vector<double> naive_cepstrum(const std::vector<double>& frame, double floor) {
  std::vector<std::complex<double>> x(frame.begin(), frame.end());
  auto spec = naive_dft(x, false);
  for (auto& c : spec) c = std::log(std::abs(c) + floor);
  const auto back = naive_dft(spec, true);
  std::vector<double> out;
  for (const auto& c : back) out.push_back(c.real());
  return out;
}

std::vector<double> steps(std::size_t n, std::vector<std::pair<std::size_t, double>> changes) {
  std::vector<double> s(n, 0.0);
  double level = 0.0;
  std::size_t c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (c < changes.size() && changes[c].first == i) level = changes[c++].second;
    s[i] = level;
  }
  return s;
}

/// Index maximising the jump between the means of the `w` samples before and after.
std::size_t brute_force_step(const std::vector<double>& s, std::size_t w) {
  std::size_t best = w;
  double best_jump = -1.0;
  for (std::size_t i = w; i + w <= s.size(); ++i) {
    double before = 0.0, after = 0.0;
    for (std::size_t k = 0; k < w; ++k) {
      before += s[i - 1 - k];
      after += s[i + k];
    }
    const double jump = std::abs(after - before) / double(w);
    if (jump > best_jump) {
      best_jump = jump;
      best = i;
    }
  }
  return best;
}

std::size_t diff(std::size_t a, std::size_t b) { return a > b ? a - b : b - a; }

}  // namespace

TEST_SUITE("events") {

TEST_CASE("fft matches a naive DFT both ways") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {2u, 8u, 64u, 256u}) {
    std::vector<std::complex<double>> x(n);
    for (auto& c : x) c = {testutil::random_vector(rng, 1, -5, 5)[0], testutil::random_vector(rng, 1, -5, 5)[0]};
    auto fast = x;
    fft(fast);
    const auto slow = naive_dft(x, false);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-9);
    fft(fast, true);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(fast[k] - x[k]) < 1e-9);
  }
  std::vector<std::complex<double>> bad(6);
  CHECK_THROWS_AS(fft(bad), Error);
}

TEST_CASE("cepstrum matches the naive oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto frame = testutil::random_vector(rng, 64, 0.0, 300.0);
    const auto fast = real_cepstrum(frame, 1e-6);
    const auto slow = naive_cepstrum(frame, 1e-6);
    REQUIRE(fast.size() == 64);
    for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-9);
  }
}

TEST_CASE("cepstrum of a unit impulse is zero") {
  const std::vector<double> impulse{1.0, 0.0, 0.0, 0.0};
  for (double v : real_cepstrum(impulse, 0.0)) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("cepstrum of a constant frame, hand computed") {
  const double c = 3.0, eps = 1e-6;
  const std::vector<double> frame(4, c);
  const auto cep = real_cepstrum(frame, eps);
  const double expected0 = (std::log(4.0 * c + eps) + 3.0 * std::log(eps)) / 4.0;
  CHECK(cep[0] == doctest::Approx(expected0).epsilon(1e-12));
}

TEST_CASE("cepstrum is invariant to circular shift") {
  std::mt19937_64 rng(2);
  const auto frame = testutil::random_vector(rng, 32, 0.0, 10.0);
  const auto base = real_cepstrum(frame, 1e-6);
  for (std::size_t s : {1u, 7u, 31u}) {
    std::vector<double> rotated(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) rotated[(i + s) % frame.size()] = frame[i];
    const auto cep = real_cepstrum(rotated, 1e-6);
    for (std::size_t i = 0; i < cep.size(); ++i) CHECK(std::abs(cep[i] - base[i]) < 1e-9);
  }
}

TEST_CASE("cepstrum rejects non power-of-two frames") {
  const std::vector<double> frame(6, 1.0);
  try {
    real_cepstrum(frame, 1e-6);
    FAIL("accepted length 6");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Size);
  }
}

TEST_CASE("frame distances start at zero") {
  DetectorConfig cfg;
  const auto s = steps(400, {{100, 60.0}});
  const auto d = frame_distances(s, cfg);
  CHECK(d.size() == 1 + (400 - cfg.frame_len) / cfg.hop);
  CHECK(d[0] == 0.0);
  for (double v : d) CHECK(v >= 0.0);
}

TEST_CASE("all-zero trace has no events") {
  CHECK(detect_events(std::vector<double>(400, 0.0), DetectorConfig{}).empty());
}

TEST_CASE("short traces are a size error") {
  try {
    detect_events(std::vector<double>(100, 0.0), DetectorConfig{});
    FAIL("short trace accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Size);
  }
}

TEST_CASE("clean step up is one turn-on near the brute-force location") {
  DetectorConfig cfg;
  const auto s = steps(400, {{100, 60.0}});
  const auto ev = detect_events(s, cfg);
  REQUIRE(ev.size() == 1);
  CHECK(ev[0].kind == EventKind::TurnOn);
  const auto truth = brute_force_step(s, cfg.hop);
  CHECK(truth == 100);
  CHECK(diff(ev[0].boundary_index, truth) <= cfg.hop);
  CHECK(ev[0].frame_distance > cfg.threshold);
}

TEST_CASE("step up then down alternates kinds") {
  DetectorConfig cfg;
  const auto s = steps(400, {{100, 60.0}, {300, 0.0}});
  const auto ev = detect_events(s, cfg);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].kind == EventKind::TurnOn);
  CHECK(ev[1].kind == EventKind::TurnOff);
  CHECK(diff(ev[0].boundary_index, 100) <= cfg.hop);
  CHECK(diff(ev[1].boundary_index, 300) <= cfg.hop);
}

TEST_CASE("events are sorted, in bounds and a frame apart") {
  DetectorConfig cfg;
  for (const auto& lt : make_validation_traces(30, 123)) {
    const auto ev = detect_events(lt.trace, cfg);
    for (std::size_t i = 0; i < ev.size(); ++i) {
      CHECK(ev[i].boundary_index < lt.trace.samples.size());
      if (i) CHECK(ev[i].boundary_index >= ev[i - 1].boundary_index + cfg.frame_len);
    }
  }
}

TEST_CASE("recall and false positives on 100 seeded traces") {
  DetectorConfig cfg;
  const auto traces = make_validation_traces(100, 2024);
  DetectionScore total;
  for (const auto& lt : traces) {
    const auto ev = detect_events(lt.trace, cfg);
    const auto s = score_detections(ev, lt.true_boundaries, cfg.hop);
    total.true_events += s.true_events;
    total.matched += s.matched;
    total.false_positives += s.false_positives;
  }
  CHECK(total.true_events >= 100);
  CHECK(total.recall() >= 0.95);
  CHECK(total.fp_per_event() <= 0.05);
}

TEST_CASE("doubling amplitude moves boundaries by at most a hop") {
  DetectorConfig cfg;
  for (const auto& lt : make_validation_traces(20, 77)) {
    auto doubled = lt.trace;
    for (auto& v : doubled.samples) v *= 2.0;
    const auto a = detect_events(lt.trace, cfg);
    const auto b = detect_events(doubled, cfg);
    for (const auto& e : a) {
      bool found = false;
      for (const auto& f : b) found = found || diff(e.boundary_index, f.boundary_index) <= cfg.hop;
      CHECK(found);
    }
  }
}

TEST_CASE("calibrated threshold is positive and reproducible") {
  const auto traces = make_validation_traces(40, 5);
  const double a = calibrate_threshold(traces, DetectorConfig{});
  const double b = calibrate_threshold(traces, DetectorConfig{});
  CHECK(a > 0.0);
  CHECK(a == b);
}

TEST_CASE("segments partition the trace") {
  const auto s = steps(400, {{100, 60.0}, {300, 0.0}});
  tracegen::PowerTrace t;
  t.samples = s;
  const auto none = segment(t, {});
  REQUIRE(none.size() == 1);
  CHECK(none[0].samples == s);
  CHECK_FALSE(none[0].on);

  const std::vector<Event> one{{EventKind::TurnOn, 120, 2.0}};
  const auto two = segment(t, one);
  REQUIRE(two.size() == 2);
  CHECK(two[0].samples.size() == 120);
  CHECK(two[1].begin == 120);
  CHECK(two[1].on);

  const auto ev = detect_events(t, DetectorConfig{});
  std::vector<double> joined;
  std::size_t expected_begin = 0;
  for (const auto& seg : segment(t, ev)) {
    CHECK(seg.begin == expected_begin);
    expected_begin += seg.samples.size();
    joined.insert(joined.end(), seg.samples.begin(), seg.samples.end());
  }
  CHECK(joined == s);
}

TEST_CASE("detector config validation") {
  DetectorConfig cfg;
  cfg.frame_len = 48;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.hop = 65;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.n_coeffs = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

}
