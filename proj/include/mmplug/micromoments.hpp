#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmplug/events.hpp"
#include "mmplug/tracegen.hpp"

namespace mmplug::moments {

enum class MomentClass { GoodUsage, TurnOn, TurnOff, ExcessiveConsumption, ConsumptionWhileVacant };
inline constexpr std::size_t kMomentClassCount = 5;

const char* to_string(MomentClass c) noexcept;

struct MicroMoment {
  std::int64_t slot_start_ms = 0;
  double slot_len_s = 0.0;
  std::string device_id;
  MomentClass cls = MomentClass::GoodUsage;
  double mean_watts = 0.0;
  bool occupied = true;
};

struct MomentRules {
  double slot_len_s = 30.0;
  double active_threshold_watts = 5.0;
  double excessive_threshold_watts = 1000.0;
  std::map<std::string, double> excessive_by_device;  ///< overrides the default per device
  events::DetectorConfig detector;

  double excessive_for(const std::string& device) const;
  void validate(const std::string& device) const;
};

/// Tiles the trace into slots of slot_len_s (the last may be shorter) and
/// labels each. Precedence: turn-on edge, turn-off edge, vacant consumption,
/// excessive consumption, good usage. A slot is unoccupied when a strict
/// majority of its occupancy samples are false.
std::vector<MicroMoment> classify_slots(const tracegen::PowerTrace& power, std::span<const bool> occupancy,
                                        const MomentRules& rules, std::span<const events::Event> events);

/// As above, with events from running the rules' detector on the trace
/// (traces shorter than two frames yield no events).
std::vector<MicroMoment> classify_slots(const tracegen::PowerTrace& power, std::span<const bool> occupancy,
                                        const MomentRules& rules);

struct MomentSummary {
  std::array<std::size_t, kMomentClassCount> counts{};
  std::size_t slots = 0;
  double wasted_fraction = 0.0;  ///< (excessive + vacant) / slots
};

MomentSummary moment_summary(std::span<const MicroMoment> moments);

/// `slot_start,device_id,class,mean_watts,occupied`
void write_moments_csv(std::ostream& out, std::span<const MicroMoment> moments);

/// Line plot of the power trace with each slot shaded by its class.
void write_moments_svg(std::ostream& out, const tracegen::PowerTrace& power, std::span<const MicroMoment> moments);

}  // namespace mmplug::moments
