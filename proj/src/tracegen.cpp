#include "mmplug/tracegen.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "mmplug/common.hpp"

namespace mmplug::tracegen {

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void ApplianceModel::validate() const {
  const std::string who = "appliance '" + name + "': ";
  require(class_id >= 0, ErrorCode::InvalidArgument, who + "class_id must be >= 0");
  require(finite_nonneg(steady_watts), ErrorCode::InvalidArgument, who + "steady_watts must be >= 0");
  require(std::isfinite(transient_peak_watts) && transient_peak_watts >= steady_watts,
          ErrorCode::InvalidArgument, who + "transient_peak_watts must be >= steady_watts");
  require(finite_nonneg(transient_duration_s), ErrorCode::InvalidArgument,
          who + "transient_duration_s must be >= 0");
  require(finite_nonneg(ripple_amplitude_watts), ErrorCode::InvalidArgument,
          who + "ripple_amplitude_watts must be >= 0");
  require(std::isfinite(ripple_period_s) && ripple_period_s > 0.0, ErrorCode::InvalidArgument,
          who + "ripple_period_s must be > 0");
  require(finite_nonneg(noise_sigma_watts), ErrorCode::InvalidArgument,
          who + "noise_sigma_watts must be >= 0");
}

void Schedule::validate() const {
  require(std::isfinite(duration_s) && duration_s > 0.0, ErrorCode::Schedule,
          "schedule duration must be > 0");
  require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0.0, ErrorCode::Schedule,
          "schedule sample rate must be > 0");
  double prev_on = -INFINITY;
  for (const auto& e : entries) {
    require(e.on_time_s < e.off_time_s, ErrorCode::Schedule, "schedule entry has on >= off");
    require(e.on_time_s >= 0.0 && e.off_time_s <= duration_s, ErrorCode::Schedule,
            "schedule entry outside [0, duration]");
    require(e.on_time_s >= prev_on, ErrorCode::Schedule, "schedule entries not sorted by on time");
    prev_on = e.on_time_s;
  }
}

std::int64_t PowerTrace::timestamp_ms(std::size_t index) const {
  return t0_ms + static_cast<std::int64_t>(std::llround(1000.0 * static_cast<double>(index) / sample_rate_hz));
}

std::size_t sample_count(double duration_s, double sample_rate_hz) {
  // Nudge before flooring so that e.g. 120 s * 2 Hz never lands on 239.999...
  return static_cast<std::size_t>(std::floor(duration_s * sample_rate_hz + 1e-9));
}

PowerTrace generate_trace(const ApplianceModel& model, const ScheduleEntry& entry,
                          const TraceOptions& options) {
  model.validate();
  require(std::isfinite(options.duration_s) && options.duration_s > 0.0, ErrorCode::InvalidArgument,
          "trace duration must be > 0");
  require(std::isfinite(options.sample_rate_hz) && options.sample_rate_hz > 0.0,
          ErrorCode::InvalidArgument, "sample rate must be > 0");
  require(options.gain_tolerance >= 0.0 && options.gain_tolerance < 1.0, ErrorCode::InvalidArgument,
          "gain tolerance must be in [0, 1)");
  require(entry.on_time_s < entry.off_time_s, ErrorCode::Schedule, "schedule entry has on >= off");
  require(entry.on_time_s >= 0.0 && entry.off_time_s <= options.duration_s, ErrorCode::Schedule,
          "schedule entry outside [0, duration]");

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double gain = 1.0 + options.gain_tolerance * (2.0 * unit(rng) - 1.0);

  PowerTrace trace;
  trace.device_id = options.device_id;
  trace.t0_ms = options.t0_ms;
  trace.sample_rate_hz = options.sample_rate_hz;
  const std::size_t n = sample_count(options.duration_s, options.sample_rate_hz);
  trace.samples.resize(n);

  const double surge = model.transient_peak_watts - model.steady_watts;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / options.sample_rate_hz;
    const double noise = model.noise_sigma_watts * gauss(rng);
    double w = noise;
    if (t >= entry.on_time_s && t < entry.off_time_s) {
      const double since_on = t - entry.on_time_s;
      w += model.steady_watts;
      if (since_on < model.transient_duration_s) {
        w += surge * (1.0 - since_on / model.transient_duration_s);
      }
      w += model.ripple_amplitude_watts *
           std::sin(2.0 * std::numbers::pi * since_on / model.ripple_period_s);
    }
    trace.samples[i] = std::max(0.0, gain * w);
  }
  return trace;
}

PowerTrace superpose(std::span<const PowerTrace> traces) {
  require(!traces.empty(), ErrorCode::Alignment, "superpose needs at least one trace");
  PowerTrace out = traces.front();
  for (const auto& t : traces.subspan(1)) {
    require(t.t0_ms == out.t0_ms && t.sample_rate_hz == out.sample_rate_hz &&
                t.samples.size() == out.samples.size(),
            ErrorCode::Alignment, "superpose: traces differ in t0, rate or length");
    for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += t.samples[i];
  }
  return out;
}

void SegmentConfig::validate() const {
  require(duration_s > 0 && sample_rate_hz > 0, ErrorCode::InvalidArgument,
          "segment duration and rate must be > 0");
  require(jitter >= 0 && jitter < 1, ErrorCode::InvalidArgument, "jitter must be in [0, 1)");
  require(sensor_tolerance >= 0 && sensor_tolerance < 1, ErrorCode::InvalidArgument,
          "sensor tolerance must be in [0, 1)");
  require(0 <= on_min_s && on_min_s <= on_max_s && on_max_s < off_min_s && off_min_s <= off_max_s &&
              off_max_s <= duration_s,
          ErrorCode::Schedule, "segment on/off windows must satisfy on_min <= on_max < off_min <= off_max <= duration");
}

Dataset generate_dataset(std::span<const ApplianceModel> fleet, int per_class,
                         const SegmentConfig& config, std::uint64_t seed) {
  require(fleet.size() >= 2, ErrorCode::InvalidArgument, "dataset needs at least 2 appliance classes");
  require(per_class >= 1, ErrorCode::InvalidArgument, "segments per class must be >= 1");
  config.validate();
  {
    std::vector<int> ids;
    for (const auto& m : fleet) {
      m.validate();
      ids.push_back(m.class_id);
    }
    std::sort(ids.begin(), ids.end());
    require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorCode::InvalidArgument,
            "class ids must be unique within a fleet");
  }

  Dataset out;
  out.reserve(fleet.size() * static_cast<std::size_t>(per_class));
  int segment_id = 0;
  for (const auto& base : fleet) {
    for (int s = 0; s < per_class; ++s, ++segment_id) {
      const std::uint64_t seg_seed = mix_seed(seed, static_cast<std::uint64_t>(segment_id));
      std::mt19937_64 rng(seg_seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto jit = [&](double v) { return v * (1.0 + config.jitter * (2.0 * unit(rng) - 1.0)); };

      ApplianceModel m = base;
      m.steady_watts = jit(base.steady_watts);
      m.transient_peak_watts = std::max(m.steady_watts, jit(base.transient_peak_watts));
      m.transient_duration_s = jit(base.transient_duration_s);
      m.ripple_amplitude_watts = jit(base.ripple_amplitude_watts);
      m.ripple_period_s = jit(base.ripple_period_s);
      m.noise_sigma_watts = jit(base.noise_sigma_watts);

      ScheduleEntry entry{base.class_id, config.on_min_s + (config.on_max_s - config.on_min_s) * unit(rng),
                          config.off_min_s + (config.off_max_s - config.off_min_s) * unit(rng)};

      TraceOptions opts;
      opts.duration_s = config.duration_s;
      opts.sample_rate_hz = config.sample_rate_hz;
      opts.seed = mix_seed(seg_seed, 1);
      opts.device_id = "seg-" + std::to_string(segment_id);
      opts.gain_tolerance = config.sensor_tolerance;

      out.push_back({segment_id, base.class_id, generate_trace(m, entry, opts)});
    }
  }
  return out;
}

std::vector<ApplianceModel> default_fleet() {
  // class, name, steady, peak, transient_s, ripple, ripple_period_s, noise
  return {
      {0, "lamp", 10.0, 12.0, 0.5, 0.3, 7.0, 0.2},
      {1, "monitor", 60.0, 90.0, 2.0, 4.0, 20.0, 0.8},
      {2, "computer", 150.0, 220.0, 3.0, 15.0, 11.0, 1.5},
      {3, "refrigerator", 400.0, 1100.0, 1.5, 10.0, 30.0, 3.0},
      {4, "kettle", 1200.0, 1250.0, 0.5, 30.0, 5.0, 5.0},
  };
}

void write_dataset_csv(std::ostream& out, const Dataset& dataset) {
  out << "segment_id,class_id,sample_index,watts\n";
  for (const auto& seg : dataset) {
    for (std::size_t i = 0; i < seg.trace.samples.size(); ++i) {
      out << seg.segment_id << ',' << seg.class_id << ',' << i << ','
          << format_double(seg.trace.samples[i]) << '\n';
    }
  }
}

Dataset read_dataset_csv(std::istream& in, double sample_rate_hz) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Io, "dataset csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "segment_id,class_id,sample_index,watts") {
    throw Error(ErrorCode::Protocol, "dataset csv: unexpected header '" + line + "'");
  }
  Dataset out;
  std::map<int, std::size_t> position;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    int seg = 0, cls = 0;
    std::size_t idx = 0;
    double watts = 0;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> seg >> c1 >> cls >> c2 >> idx >> c3 >> watts) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw Error(ErrorCode::Protocol, "dataset csv: malformed line " + std::to_string(line_no));
    }
    auto [it, inserted] = position.try_emplace(seg, out.size());
    if (inserted) {
      LabeledSegment s;
      s.segment_id = seg;
      s.class_id = cls;
      s.trace.device_id = "seg-" + std::to_string(seg);
      s.trace.sample_rate_hz = sample_rate_hz;
      out.push_back(std::move(s));
    }
    auto& s = out[it->second];
    if (s.class_id != cls || idx != s.trace.samples.size()) {
      throw Error(ErrorCode::Protocol, "dataset csv: inconsistent row at line " + std::to_string(line_no));
    }
    s.trace.samples.push_back(watts);
  }
  return out;
}

}  // namespace mmplug::tracegen
