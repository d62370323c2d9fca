#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmplug/common.hpp"
#include "mmplug/events.hpp"
#include "mmplug/tracegen.hpp"

namespace mmplug::features {

double rms(std::span<const double> window);
double mad(std::span<const double> window);

enum class Descriptor { Rms, Mad };
enum class FusionStrategy { Summation, Multiplication, Concatenation };

/// Which columns a classifier sees: one descriptor alone or a fusion of both.
enum class FeatureSet { Rms, Mad, Summation, Multiplication, Concatenation };

const char* to_string(Descriptor d) noexcept;
const char* to_string(FusionStrategy s) noexcept;
const char* to_string(FeatureSet s) noexcept;
std::optional<FusionStrategy> parse_fusion(std::string_view name);
std::optional<FeatureSet> fused_set(FusionStrategy s);

struct FeatureVector {
  std::vector<double> values;
  Descriptor descriptor = Descriptor::Rms;
  std::optional<FusionStrategy> fused;  ///< set when produced by fuse()
  int segment_id = -1;
};

/// How a per-window descriptor sequence is brought to the fixed length D.
enum class LengthPolicy {
  Truncate,  ///< first D windows, the last value repeated when shorter
  Resample,  ///< linear interpolation over the whole sequence
};

struct FeatureConfig {
  std::size_t window_len = 8;
  std::size_t hop = 4;
  std::size_t dims = 16;  ///< fixed length D of every descriptor vector
  LengthPolicy length = LengthPolicy::Truncate;

  void validate() const;
};

/// Descriptor over each sliding window: 1 + (len - window_len) / hop values.
std::vector<double> extract_raw(std::span<const double> segment, std::size_t window_len, std::size_t hop,
                                Descriptor descriptor);

/// Linear-interpolation resample of a raw descriptor sequence to exactly
/// `dims` points (endpoints preserved; a single value is replicated).
std::vector<double> resample(std::span<const double> raw, std::size_t dims);
/// First `dims` values, padded with the last one.
std::vector<double> truncate_pad(std::span<const double> raw, std::size_t dims);

FeatureVector extract(std::span<const double> segment, const FeatureConfig& cfg, Descriptor descriptor,
                      int segment_id = -1);

/// Per-dimension min-max statistics fitted on a set of training rows.
struct MinMax {
  std::vector<double> lo;
  std::vector<double> hi;

  static MinMax fit(const Matrix& data, std::span<const std::size_t> rows);
  static MinMax fit(std::span<const std::vector<double>> rows);
  /// Maps each dimension to (x - lo) / (hi - lo); a zero range maps to 0.
  std::vector<double> apply(std::span<const double> x) const;
};

/// Combines two already-normalised descriptor vectors of equal length.
FeatureVector fuse(const FeatureVector& rms_norm, const FeatureVector& mad_norm, FusionStrategy strategy);

/// Normalises both inputs with the given training statistics, then fuses.
FeatureVector fuse(const FeatureVector& rms_vec, const FeatureVector& mad_vec, FusionStrategy strategy,
                   const MinMax& rms_stats, const MinMax& mad_stats);

/// RMS and MAD vectors of every dataset segment, before normalisation.
struct DescriptorTable {
  Matrix rms;
  Matrix mad;
  std::vector<int> labels;
  std::vector<int> segment_ids;

  std::size_t size() const noexcept { return labels.size(); }
};

/// The samples a segment's descriptors are taken from: the longest
/// detected on-interval, or the whole trace when the detector finds none.
std::vector<double> select_on_interval(const tracegen::PowerTrace& trace, const events::DetectorConfig& detector,
                                       std::size_t min_len);

DescriptorTable build_table(const tracegen::Dataset& dataset, const events::DetectorConfig& detector,
                            const FeatureConfig& cfg);

/// Feature matrix for `rows`, normalised with statistics fitted on `train_rows` only.
Matrix assemble(const DescriptorTable& table, FeatureSet set, std::span<const std::size_t> train_rows,
                std::span<const std::size_t> rows);

/// `segment_id,class_id,f_0,...,f_{D-1}`
void write_features_csv(std::ostream& out, const DescriptorTable& table, const Matrix& features);

}  // namespace mmplug::features
