#include <memory>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mmplug/common.hpp"
#include "mmplug/micromoments.hpp"

using namespace mmplug;
using namespace mmplug::moments;
using events::Event;
using events::EventKind;

namespace {

struct SlotSpec {
  double watts;
  int vacant_samples;  ///< of 30
  std::vector<Event> events;
};

/// Independent statement of the slot rules.
MomentClass oracle(const std::vector<double>& w, const std::vector<bool>& occ, std::size_t begin, std::size_t end,
                   const std::vector<Event>& ev, const MomentRules& r) {
  bool on = false, off = false;
  for (const auto& e : ev) {
    if (e.boundary_index >= begin && e.boundary_index < end) (e.kind == EventKind::TurnOn ? on : off) = true;
  }
  if (on) return MomentClass::TurnOn;
  if (off) return MomentClass::TurnOff;
  double sum = 0.0;
  std::size_t vacant = 0;
  for (std::size_t i = begin; i < end; ++i) {
    sum += w[i];
    vacant += !occ[i];
  }
  const double mean = sum / double(end - begin);
  const bool unoccupied = 2 * vacant > end - begin;
  if (mean >= r.active_threshold_watts && unoccupied) return MomentClass::ConsumptionWhileVacant;
  if (mean >= r.excessive_threshold_watts) return MomentClass::ExcessiveConsumption;
  return MomentClass::GoodUsage;
}

tracegen::PowerTrace trace_of(std::vector<double> w) {
  tracegen::PowerTrace t;
  t.device_id = "plug-7";
  t.t0_ms = 1'000'000;
  t.sample_rate_hz = 1.0;
  t.samples = std::move(w);
  return t;
}

}  // namespace

TEST_SUITE("micromoments") {

TEST_CASE("ten-slot scenario follows the rule oracle exactly") {
  const std::vector<SlotSpec> spec{
      {0.0, 0, {}},                                                     // idle, occupied
      {0.0, 0, {{EventKind::TurnOn, 45, 3.0}}},                          // on edge
      {60.0, 0, {}},                                                    // normal use
      {60.0, 30, {}},                                                   // nobody home
      {1500.0, 0, {}},                                                  // heavy use
      {1500.0, 20, {}},                                                 // vacancy beats excess
      {60.0, 0, {{EventKind::TurnOff, 181, 2.0}, {EventKind::TurnOn, 200, 2.0}}},  // on beats off
      {60.0, 30, {{EventKind::TurnOff, 215, 2.0}}},                     // edge beats vacancy
      {500.0, 15, {}},                                                  // tie is occupied
      {1000.0, 0, {}},                                                  // threshold inclusive
  };
  const std::vector<MomentClass> expected{
      MomentClass::GoodUsage,   MomentClass::TurnOn,   MomentClass::GoodUsage,
      MomentClass::ConsumptionWhileVacant, MomentClass::ExcessiveConsumption,
      MomentClass::ConsumptionWhileVacant, MomentClass::TurnOn,  MomentClass::TurnOff,
      MomentClass::GoodUsage,   MomentClass::ExcessiveConsumption,
  };

  std::vector<double> w;
  std::vector<bool> occ;
  std::vector<Event> ev;
  for (const auto& s : spec) {
    for (int i = 0; i < 30; ++i) {
      w.push_back(s.watts);
      occ.push_back(i >= s.vacant_samples);
    }
    ev.insert(ev.end(), s.events.begin(), s.events.end());
  }
  const MomentRules rules;  // 30 s slots, 5 W active, 1000 W excessive
  const auto trace = trace_of(w);
  const std::unique_ptr<bool[]> occ_arr(new bool[occ.size()]);
  std::copy(occ.begin(), occ.end(), occ_arr.get());
  const auto moments = classify_slots(trace, std::span<const bool>(occ_arr.get(), occ.size()), rules, ev);

  REQUIRE(moments.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CAPTURE(i);
    CHECK(moments[i].cls == oracle(w, occ, i * 30, i * 30 + 30, ev, rules));
    CHECK(moments[i].cls == expected[i]);
    CHECK(moments[i].slot_start_ms == 1'000'000 + std::int64_t(i) * 30'000);
    CHECK(moments[i].slot_len_s == 30.0);
    CHECK(moments[i].device_id == "plug-7");
  }
  CHECK(moments[3].occupied == false);
  CHECK(moments[8].occupied == true);
  CHECK(moments[4].mean_watts == 1500.0);

  const auto summary = moment_summary(moments);
  CHECK(summary.slots == 10);
  CHECK(summary.counts[static_cast<int>(MomentClass::ConsumptionWhileVacant)] == 2);
  CHECK(summary.wasted_fraction == doctest::Approx(0.4));
}

TEST_CASE("detected step inside a slot is a turn-on") {
  std::vector<double> w(240, 0.0);
  for (std::size_t i = 100; i < w.size(); ++i) w[i] = 60.0;
  const auto trace = trace_of(w);
  const std::unique_ptr<bool[]> occ(new bool[w.size()]);
  std::fill_n(occ.get(), w.size(), true);
  const auto moments = classify_slots(trace, std::span<const bool>(occ.get(), w.size()), MomentRules{});
  REQUIRE(moments.size() == 8);
  CHECK(moments[3].cls == MomentClass::TurnOn);
  for (std::size_t i : {0u, 1u, 2u, 4u, 5u, 6u, 7u}) CHECK(moments[i].cls == MomentClass::GoodUsage);
}

TEST_CASE("slots tile the trace with a short tail") {
  const auto trace = trace_of(std::vector<double>(95, 1.0));
  const std::unique_ptr<bool[]> occ(new bool[95]);
  std::fill_n(occ.get(), 95, true);
  const auto moments = classify_slots(trace, std::span<const bool>(occ.get(), 95), MomentRules{}, {});
  REQUIRE(moments.size() == 4);
  double covered = 0.0;
  for (const auto& m : moments) covered += m.slot_len_s;
  CHECK(covered == 95.0);
  CHECK(moments.back().slot_len_s == 5.0);
}

TEST_CASE("occupancy must cover the power series") {
  const auto trace = trace_of(std::vector<double>(60, 1.0));
  const std::unique_ptr<bool[]> occ(new bool[59]);
  try {
    classify_slots(trace, std::span<const bool>(occ.get(), 59), MomentRules{}, {});
    FAIL("misaligned occupancy accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Alignment);
  }
}

TEST_CASE("raising the excessive threshold never adds excessive slots") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> level(0.0, 3000.0);
  std::bernoulli_distribution present(0.7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w;
    for (int s = 0; s < 20; ++s) w.insert(w.end(), 30, level(rng));
    const std::unique_ptr<bool[]> occ(new bool[w.size()]);
    for (std::size_t i = 0; i < w.size(); ++i) occ[i] = present(rng);
    const auto trace = trace_of(w);
    std::size_t prev = SIZE_MAX;
    for (double thr = 100.0; thr <= 3200.0; thr += 100.0) {
      MomentRules r;
      r.excessive_threshold_watts = thr;
      const auto s = moment_summary(classify_slots(trace, std::span<const bool>(occ.get(), w.size()), r, {}));
      const auto n = s.counts[static_cast<int>(MomentClass::ExcessiveConsumption)];
      CHECK(n <= prev);
      prev = n;
    }
  }
}

TEST_CASE("per-device excessive override") {
  MomentRules r;
  r.excessive_by_device["plug-7"] = 100.0;
  CHECK(r.excessive_for("plug-7") == 100.0);
  CHECK(r.excessive_for("other") == 1000.0);
  const auto trace = trace_of(std::vector<double>(30, 150.0));
  const std::unique_ptr<bool[]> occ(new bool[30]);
  std::fill_n(occ.get(), 30, true);
  CHECK(classify_slots(trace, std::span<const bool>(occ.get(), 30), r, {})[0].cls ==
        MomentClass::ExcessiveConsumption);
}

TEST_CASE("rule validation") {
  MomentRules r;
  r.excessive_threshold_watts = 4.0;
  CHECK_THROWS_AS(r.validate("x"), Error);
  r = {};
  r.slot_len_s = 0.0;
  CHECK_THROWS_AS(r.validate("x"), Error);
}

TEST_CASE("summary edge cases") {
  try {
    moment_summary(std::vector<MicroMoment>{});
    FAIL("empty summary accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
  }
  std::vector<MicroMoment> good(7);
  const auto s = moment_summary(good);
  CHECK(s.wasted_fraction == 0.0);
  std::size_t total = 0;
  for (auto c : s.counts) total += c;
  CHECK(total == 7);
}

TEST_CASE("csv and svg output") {
  const auto trace = trace_of(std::vector<double>(60, 20.0));
  const std::unique_ptr<bool[]> occ(new bool[60]);
  std::fill_n(occ.get(), 60, false);
  const auto m = classify_slots(trace, std::span<const bool>(occ.get(), 60), MomentRules{}, {});
  std::ostringstream csv, svg;
  write_moments_csv(csv, m);
  CHECK(csv.str().starts_with("slot_start,device_id,class,mean_watts,occupied\n1000000,plug-7,consumption_while_vacant,20,"));
  write_moments_svg(svg, trace, m);
  CHECK(svg.str().find("<svg") != std::string::npos);
  CHECK(svg.str().find("</svg>") != std::string::npos);
}

}
