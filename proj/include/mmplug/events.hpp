#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mmplug/tracegen.hpp"

namespace mmplug::events {

enum class EventKind { TurnOn, TurnOff };

const char* to_string(EventKind kind) noexcept;

struct Event {
  EventKind kind = EventKind::TurnOn;
  std::size_t boundary_index = 0;  ///< first sample of the new state
  double frame_distance = 0.0;     ///< cepstral distance at the detecting frame pair

  bool operator==(const Event&) const = default;
};

/// On the default 64/16/16 configuration, noise-only frame pairs stay below
/// ~0.85 and 10 W steps under 1 W noise peak above ~1.5.
inline constexpr double kDefaultThreshold = 1.1;

struct DetectorConfig {
  std::size_t frame_len = 64;  ///< power of two
  std::size_t hop = 16;
  std::size_t n_coeffs = 16;
  double threshold = kDefaultThreshold;
  double log_floor = 1e-6;

  void validate() const;
};

/// In-place iterative radix-2 FFT. Length must be a power of two.
void fft(std::span<std::complex<double>> data, bool inverse = false);

/// Real part of IDFT(log(|DFT(frame)| + log_floor)).
std::vector<double> real_cepstrum(std::span<const double> frame, double log_floor);

/// Euclidean distance between the leading cepstral coefficients of frame j
/// and frame j-1, for j = 1..frames-1 (element 0 is always 0).
std::vector<double> frame_distances(std::span<const double> samples, const DetectorConfig& cfg);

std::vector<Event> detect_events(const tracegen::PowerTrace& trace, const DetectorConfig& cfg);
std::vector<Event> detect_events(std::span<const double> samples, const DetectorConfig& cfg);

struct TraceSegment {
  std::size_t begin = 0;
  std::vector<double> samples;
  bool on = false;
};

/// Cuts the trace at every event boundary. The first segment is taken as
/// "off" unless the first event is a TurnOff.
std::vector<TraceSegment> segment(const tracegen::PowerTrace& trace, std::span<const Event> events);

/// A trace with ground-truth boundaries, used to tune the threshold.
struct LabeledTrace {
  tracegen::PowerTrace trace;
  std::vector<std::size_t> true_boundaries;
};

struct DetectionScore {
  std::size_t true_events = 0;
  std::size_t matched = 0;
  std::size_t false_positives = 0;
  double recall() const { return true_events ? double(matched) / double(true_events) : 1.0; }
  double fp_per_event() const { return true_events ? double(false_positives) / double(true_events) : 0.0; }
};

/// One-to-one greedy matching of detections to truth within +/- tolerance samples.
DetectionScore score_detections(std::span<const Event> detected, std::span<const std::size_t> truth,
                                std::size_t tolerance);

/// Seeded traces of two staggered appliances with steps in [10, 200] W and
/// total noise sigma <= 1 W.
std::vector<LabeledTrace> make_validation_traces(std::size_t count, std::uint64_t seed);

/// Picks the threshold minimising misses + false positives over the labelled
/// traces; returns the centre of the widest optimal threshold range.
double calibrate_threshold(std::span<const LabeledTrace> traces, DetectorConfig cfg);

void write_events_csv(std::ostream& out, std::span<const Event> events);

}  // namespace mmplug::events
