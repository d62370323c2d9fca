#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmplug/classify.hpp"
#include "mmplug/events.hpp"
#include "mmplug/features.hpp"
#include "mmplug/tracegen.hpp"

namespace mmplug::config {

/// Everything one benchmark or simulation run depends on.
///
/// INI schema (every key optional):
///
///   [experiment]  seed, per_class, classes, folds,
///                 strategies = summation,multiplication,concatenation
///   [segment]     duration_s, sample_rate_hz, jitter, sensor_tolerance,
///                 on_min_s, on_max_s, off_min_s, off_max_s
///   [detector]    frame_len, hop, n_coeffs, log_floor, threshold (number or "auto")
///   [features]    window_len, hop, dims, length = truncate|resample
///   [appliance.N] name, steady_watts, transient_peak_watts, transient_duration_s,
///                 ripple_amplitude_watts, ripple_period_s, noise_sigma_watts
///   [model.N]     kind = knn|tree|bagged, k, distance = euclidean|weighted|cosine,
///                 max_splits, learners
///
/// `classes` keeps the first C appliances. Appliance sections override (or
/// extend) the default fleet by index; model sections replace the default
/// benchmark rows when present.
struct ExperimentConfig {
  std::uint64_t seed = 42;
  int per_class = 40;
  std::size_t folds = 10;
  std::vector<tracegen::ApplianceModel> fleet = tracegen::default_fleet();
  tracegen::SegmentConfig segment;
  events::DetectorConfig detector;
  bool auto_threshold = true;
  features::FeatureConfig features;
  std::vector<features::FusionStrategy> strategies{features::FusionStrategy::Summation,
                                                   features::FusionStrategy::Multiplication,
                                                   features::FusionStrategy::Concatenation};
  std::vector<classify::ModelSpec> models = classify::benchmark_specs();

  /// Throws Error(Config) naming the offending field.
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& in);

/// Applies one "section.key" = value override.
void apply_setting(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);

}  // namespace mmplug::config
