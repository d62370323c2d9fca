#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mmplug::tracegen {

/// Mains voltage used to convert sensed current into active power.
inline constexpr double kNominalVoltage = 230.0;
/// Current sensor full scale.
inline constexpr double kMaxCurrentAmps = 20.0;
inline constexpr double kMaxWatts = kNominalVoltage * kMaxCurrentAmps;

/// Parametric power signature of one appliance class.
struct ApplianceModel {
  int class_id = 0;
  std::string name;
  double steady_watts = 0.0;
  double transient_peak_watts = 0.0;  ///< turn-on surge, decays linearly to steady
  double transient_duration_s = 0.0;
  double ripple_amplitude_watts = 0.0;
  double ripple_period_s = 1.0;
  double noise_sigma_watts = 0.0;

  /// Throws Error(InvalidArgument) when a field is out of its domain.
  void validate() const;
};

struct ScheduleEntry {
  int class_id = 0;
  double on_time_s = 0.0;
  double off_time_s = 0.0;
};

struct Schedule {
  std::vector<ScheduleEntry> entries;
  double duration_s = 0.0;
  double sample_rate_hz = 1.0;

  /// Throws Error(Schedule) on unsorted or out-of-range entries. Entries of different appliances may overlap.
  void validate() const;
};

struct PowerTrace {
  std::string device_id;
  std::int64_t t0_ms = 0;
  double sample_rate_hz = 1.0;
  std::vector<double> samples;

  std::int64_t timestamp_ms(std::size_t index) const;
};

struct TraceOptions {
  double duration_s = 0.0;
  double sample_rate_hz = 1.0;
  std::uint64_t seed = 0;
  std::int64_t t0_ms = 0;
  std::string device_id = "plug-0";
  /// Sensor gain error: the whole trace is scaled by a factor drawn
  /// uniformly from [1 - tolerance, 1 + tolerance].
  double gain_tolerance = 0.0;
};

std::size_t sample_count(double duration_s, double sample_rate_hz);

PowerTrace generate_trace(const ApplianceModel& model, const ScheduleEntry& entry,
                          const TraceOptions& options);

/// Pointwise sum of aligned traces (equal t0, rate and length).
PowerTrace superpose(std::span<const PowerTrace> traces);

struct SegmentConfig {
  double duration_s = 120.0;
  double sample_rate_hz = 2.0;
  double jitter = 0.05;            ///< +/- fraction applied to every model parameter
  double sensor_tolerance = 0.05;  ///< per-segment gain error
  double on_min_s = 10.0;
  double on_max_s = 40.0;
  double off_min_s = 80.0;
  double off_max_s = 110.0;

  void validate() const;
};

struct LabeledSegment {
  int segment_id = 0;
  int class_id = 0;
  PowerTrace trace;
};

using Dataset = std::vector<LabeledSegment>;

/// Exactly fleet.size() * per_class segments, grouped by class in fleet
/// order. Each segment draws a jittered copy of its class model and a random
/// on/off window.
Dataset generate_dataset(std::span<const ApplianceModel> fleet, int per_class,
                         const SegmentConfig& config, std::uint64_t seed);

/// Five desk-scale appliance classes with disjoint steady power.
std::vector<ApplianceModel> default_fleet();

void write_dataset_csv(std::ostream& out, const Dataset& dataset);
Dataset read_dataset_csv(std::istream& in, double sample_rate_hz);

}  // namespace mmplug::tracegen
