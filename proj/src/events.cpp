#include "mmplug/events.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "mmplug/common.hpp"

namespace mmplug::events {

const char* to_string(EventKind kind) noexcept {
  return kind == EventKind::TurnOn ? "turn_on" : "turn_off";
}

void DetectorConfig::validate() const {
  if (frame_len < 2 || !std::has_single_bit(frame_len)) {
    throw Error(ErrorCode::Size, "detector frame_len must be a power of two >= 2");
  }
  if (hop == 0 || hop > frame_len) throw Error(ErrorCode::InvalidArgument, "detector hop must be in [1, frame_len]");
  if (n_coeffs == 0 || n_coeffs > frame_len) {
    throw Error(ErrorCode::InvalidArgument, "detector n_coeffs must be in [1, frame_len]");
  }
  if (!(threshold > 0.0)) throw Error(ErrorCode::InvalidArgument, "detector threshold must be > 0");
  if (!(log_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "detector log_floor must be > 0");
}

void fft(std::span<std::complex<double>> data, bool inverse) {
  const std::size_t n = data.size();
  if (n < 1 || !std::has_single_bit(n)) throw Error(ErrorCode::Size, "fft length must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : data) x /= static_cast<double>(n);
  }
}

std::vector<double> real_cepstrum(std::span<const double> frame, double log_floor) {
  if (frame.size() < 2 || !std::has_single_bit(frame.size())) {
    throw Error(ErrorCode::Size, "cepstrum frame length must be a power of two >= 2, got " +
                                     std::to_string(frame.size()));
  }
  std::vector<std::complex<double>> spec(frame.begin(), frame.end());
  fft(spec);
  for (auto& x : spec) x = std::log(std::abs(x) + log_floor);
  fft(spec, true);
  std::vector<double> out(spec.size());
  std::transform(spec.begin(), spec.end(), out.begin(), [](const auto& c) { return c.real(); });
  return out;
}

std::vector<double> frame_distances(std::span<const double> samples, const DetectorConfig& cfg) {
  cfg.validate();
  if (samples.size() < 2 * cfg.frame_len) {
    throw Error(ErrorCode::Size, "trace has " + std::to_string(samples.size()) +
                                     " samples, detector needs at least " + std::to_string(2 * cfg.frame_len));
  }
  const std::size_t frames = 1 + (samples.size() - cfg.frame_len) / cfg.hop;
  std::vector<double> dist(frames, 0.0);
  std::vector<double> prev;
  for (std::size_t j = 0; j < frames; ++j) {
    auto cep = real_cepstrum(samples.subspan(j * cfg.hop, cfg.frame_len), cfg.log_floor);
    cep.resize(cfg.n_coeffs);
    if (j > 0) {
      double acc = 0.0;
      for (std::size_t q = 0; q < cfg.n_coeffs; ++q) {
        const double diff = cep[q] - prev[q];
        acc += diff * diff;
      }
      dist[j] = std::sqrt(acc);
    }
    prev = std::move(cep);
  }
  return dist;
}

namespace {

double mean_of(std::span<const double> x, std::size_t begin, std::size_t end) {
  if (end <= begin) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += x[i];
  return s / static_cast<double>(end - begin);
}

/// Split point inside [lo, hi) with the largest jump in local mean power.
std::size_t locate_step(std::span<const double> x, std::size_t lo, std::size_t hi, std::size_t half) {
  std::size_t best = std::max<std::size_t>(lo, 1);
  double best_jump = -1.0;
  for (std::size_t b = best; b < hi; ++b) {
    const double left = mean_of(x, b >= half ? b - half : 0, b);
    const double right = mean_of(x, b, std::min(x.size(), b + half));
    const double jump = std::abs(right - left);
    if (jump > best_jump) {
      best_jump = jump;
      best = b;
    }
  }
  return best;
}

std::vector<Event> detect_from_distances(std::span<const double> x, std::span<const double> dist,
                                         const DetectorConfig& cfg) {
  std::vector<Event> found;
  const std::size_t frames = dist.size();
  for (std::size_t j = 1; j < frames; ++j) {
    const double d = dist[j];
    if (!(d > cfg.threshold)) continue;
    const bool rises = j == 1 || d >= dist[j - 1];
    const bool falls = j + 1 == frames || d > dist[j + 1];
    if (!rises || !falls) continue;

    // the peak pair can trail the step by one hop
    const std::size_t lo = j >= 2 ? (j - 2) * cfg.hop : 0;
    const std::size_t hi = std::min(x.size(), j * cfg.hop + cfg.frame_len);
    const std::size_t b = locate_step(x, lo, hi, cfg.hop);

    if (!found.empty()) {
      auto& last = found.back();
      const std::size_t gap = b > last.boundary_index ? b - last.boundary_index : last.boundary_index - b;
      if (gap < cfg.frame_len) {
        last.frame_distance = std::max(last.frame_distance, d);
        continue;
      }
    }
    const std::size_t half = cfg.frame_len / 2;
    const double before = mean_of(x, b >= half ? b - half : 0, b);
    const double after = mean_of(x, b, std::min(x.size(), b + half));
    found.push_back({after > before ? EventKind::TurnOn : EventKind::TurnOff, b, d});
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const Event& a, const Event& b) { return a.boundary_index < b.boundary_index; });
  return found;
}

}  // namespace

std::vector<Event> detect_events(std::span<const double> samples, const DetectorConfig& cfg) {
  const auto dist = frame_distances(samples, cfg);
  return detect_from_distances(samples, dist, cfg);
}

std::vector<Event> detect_events(const tracegen::PowerTrace& trace, const DetectorConfig& cfg) {
  return detect_events(std::span<const double>(trace.samples), cfg);
}

std::vector<TraceSegment> segment(const tracegen::PowerTrace& trace, std::span<const Event> events) {
  const auto& x = trace.samples;
  std::vector<TraceSegment> out;
  bool on = !events.empty() && events.front().kind == EventKind::TurnOff;
  std::size_t begin = 0;
  auto emit = [&](std::size_t end) {
    if (end > begin) out.push_back({begin, std::vector<double>(x.begin() + begin, x.begin() + end), on});
    begin = end;
  };
  for (const auto& e : events) {
    const std::size_t b = std::min(e.boundary_index, x.size());
    if (b < begin) continue;
    emit(b);
    on = e.kind == EventKind::TurnOn;
  }
  emit(x.size());
  return out;
}

DetectionScore score_detections(std::span<const Event> detected, std::span<const std::size_t> truth,
                                std::size_t tolerance) {
  DetectionScore score;
  score.true_events = truth.size();
  std::vector<bool> used(detected.size(), false);
  for (std::size_t t : truth) {
    std::size_t best = detected.size();
    std::size_t best_err = tolerance + 1;
    for (std::size_t i = 0; i < detected.size(); ++i) {
      if (used[i]) continue;
      const std::size_t b = detected[i].boundary_index;
      const std::size_t err = b > t ? b - t : t - b;
      if (err < best_err) {
        best_err = err;
        best = i;
      }
    }
    if (best < detected.size()) {
      used[best] = true;
      ++score.matched;
    }
  }
  score.false_positives = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  return score;
}

std::vector<LabeledTrace> make_validation_traces(std::size_t count, std::uint64_t seed) {
  constexpr double kRate = 2.0;
  constexpr double kDuration = 400.0;
  std::vector<LabeledTrace> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::mt19937_64 rng(mix_seed(seed, k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double a, double b) { return a + (b - a) * unit(rng); };

    tracegen::ApplianceModel a{0, "a", between(10, 200), 0, 0, 0, 1, between(0, 0.7)};
    tracegen::ApplianceModel b{1, "b", between(10, 200), 0, 0, 0, 1, between(0, 0.7)};
    a.transient_peak_watts = a.steady_watts;
    b.transient_peak_watts = b.steady_watts;
    const tracegen::ScheduleEntry ea{0, between(40, 60), between(180, 200)};
    const tracegen::ScheduleEntry eb{1, between(110, 130), between(250, 270)};

    tracegen::TraceOptions opts;
    opts.duration_s = kDuration;
    opts.sample_rate_hz = kRate;
    opts.seed = mix_seed(seed ^ 0xA5A5u, 2 * k);
    const auto ta = tracegen::generate_trace(a, ea, opts);
    opts.seed = mix_seed(seed ^ 0xA5A5u, 2 * k + 1);
    const auto tb = tracegen::generate_trace(b, eb, opts);
    const std::vector<tracegen::PowerTrace> parts{ta, tb};

    auto first_index = [&](double t) { return static_cast<std::size_t>(std::ceil(t * kRate)); };
    out.push_back({tracegen::superpose(parts),
                   {first_index(ea.on_time_s), first_index(eb.on_time_s), first_index(ea.off_time_s),
                    first_index(eb.off_time_s)}});
  }
  return out;
}

double calibrate_threshold(std::span<const LabeledTrace> traces, DetectorConfig cfg) {
  if (traces.empty()) throw Error(ErrorCode::InvalidArgument, "calibration needs at least one trace");
  cfg.validate();
  std::vector<std::vector<double>> dists;
  dists.reserve(traces.size());
  for (const auto& t : traces) dists.push_back(frame_distances(t.trace.samples, cfg));

  constexpr int kSteps = 240;
  std::vector<double> grid(kSteps + 1);
  std::vector<std::size_t> errors(kSteps + 1, 0);
  for (int step = 0; step <= kSteps; ++step) {
    cfg.threshold = grid[step] = 0.1 * std::pow(10.0, step / 80.0);  // 0.1 .. 100, log-spaced
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto found = detect_from_distances(traces[i].trace.samples, dists[i], cfg);
      const auto s = score_detections(found, traces[i].true_boundaries, cfg.hop);
      errors[step] += (s.true_events - s.matched) + s.false_positives;
    }
  }
  // Centre of the widest run of minimal-error thresholds.
  const std::size_t least = *std::min_element(errors.begin(), errors.end());
  int run_start = -1, best_start = 0, best_len = 0;
  for (int step = 0; step <= kSteps + 1; ++step) {
    const bool at_min = step <= kSteps && errors[step] == least;
    if (at_min && run_start < 0) run_start = step;
    if (!at_min && run_start >= 0) {
      if (step - run_start > best_len) {
        best_len = step - run_start;
        best_start = run_start;
      }
      run_start = -1;
    }
  }
  const double best_threshold = grid[best_start + (best_len - 1) / 2];
  return best_threshold;
}

void write_events_csv(std::ostream& out, std::span<const Event> events) {
  out << "boundary_index,kind,frame_distance\n";
  for (const auto& e : events) {
    out << e.boundary_index << ',' << to_string(e.kind) << ',' << format_double(e.frame_distance) << '\n';
  }
}

}  // namespace mmplug::events
