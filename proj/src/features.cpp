#include "mmplug/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace mmplug::features {

double rms(std::span<const double> window) {
  if (window.empty()) throw Error(ErrorCode::Size, "rms of an empty window");
  double acc = 0.0;
  for (double x : window) acc += x * x;
  return std::sqrt(acc / static_cast<double>(window.size()));
}

double mad(std::span<const double> window) {
  if (window.empty()) throw Error(ErrorCode::Size, "mad of an empty window");
  const double n = static_cast<double>(window.size());
  double mean = 0.0;
  for (double x : window) mean += x;
  mean /= n;
  double acc = 0.0;
  for (double x : window) acc += std::abs(x - mean);
  return acc / n;
}

const char* to_string(Descriptor d) noexcept { return d == Descriptor::Rms ? "rms" : "mad"; }

const char* to_string(FusionStrategy s) noexcept {
  switch (s) {
    case FusionStrategy::Summation: return "summation";
    case FusionStrategy::Multiplication: return "multiplication";
    case FusionStrategy::Concatenation: return "concatenation";
  }
  return "?";
}

const char* to_string(FeatureSet s) noexcept {
  switch (s) {
    case FeatureSet::Rms: return "rms";
    case FeatureSet::Mad: return "mad";
    case FeatureSet::Summation: return "summation";
    case FeatureSet::Multiplication: return "multiplication";
    case FeatureSet::Concatenation: return "concatenation";
  }
  return "?";
}

std::optional<FusionStrategy> parse_fusion(std::string_view name) {
  if (name == "summation" || name == "sum") return FusionStrategy::Summation;
  if (name == "multiplication" || name == "product") return FusionStrategy::Multiplication;
  if (name == "concatenation" || name == "concat") return FusionStrategy::Concatenation;
  return std::nullopt;
}

std::optional<FeatureSet> fused_set(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::Summation: return FeatureSet::Summation;
    case FusionStrategy::Multiplication: return FeatureSet::Multiplication;
    case FusionStrategy::Concatenation: return FeatureSet::Concatenation;
  }
  return std::nullopt;
}

void FeatureConfig::validate() const {
  if (window_len == 0 || hop == 0 || dims == 0) {
    throw Error(ErrorCode::InvalidArgument, "feature window_len, hop and dims must be >= 1");
  }
}

std::vector<double> extract_raw(std::span<const double> segment, std::size_t window_len, std::size_t hop,
                                Descriptor descriptor) {
  if (window_len == 0 || hop == 0) throw Error(ErrorCode::InvalidArgument, "window_len and hop must be >= 1");
  if (segment.size() < window_len) {
    throw Error(ErrorCode::Size, "segment of " + std::to_string(segment.size()) + " samples is shorter than window " +
                                     std::to_string(window_len));
  }
  const std::size_t count = 1 + (segment.size() - window_len) / hop;
  std::vector<double> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    const auto win = segment.subspan(w * hop, window_len);
    out[w] = descriptor == Descriptor::Rms ? rms(win) : mad(win);
  }
  return out;
}

std::vector<double> resample(std::span<const double> raw, std::size_t dims) {
  if (raw.empty()) throw Error(ErrorCode::Size, "cannot resample an empty descriptor sequence");
  if (dims == 0) throw Error(ErrorCode::InvalidArgument, "resample target length must be >= 1");
  std::vector<double> out(dims);
  if (raw.size() == 1 || dims == 1) {
    std::fill(out.begin(), out.end(), raw.front());
    return out;
  }
  const double scale = static_cast<double>(raw.size() - 1) / static_cast<double>(dims - 1);
  for (std::size_t i = 0; i < dims; ++i) {
    const double pos = static_cast<double>(i) * scale;
    const std::size_t k = std::min(static_cast<std::size_t>(pos), raw.size() - 2);
    const double frac = pos - static_cast<double>(k);
    out[i] = raw[k] + frac * (raw[k + 1] - raw[k]);
  }
  return out;
}

std::vector<double> truncate_pad(std::span<const double> raw, std::size_t dims) {
  if (raw.empty()) throw Error(ErrorCode::Size, "cannot pad an empty descriptor sequence");
  if (dims == 0) throw Error(ErrorCode::InvalidArgument, "target length must be >= 1");
  std::vector<double> out(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(std::min(dims, raw.size())));
  out.resize(dims, raw.back());
  return out;
}

FeatureVector extract(std::span<const double> segment, const FeatureConfig& cfg, Descriptor descriptor,
                      int segment_id) {
  cfg.validate();
  FeatureVector fv;
  const auto raw = extract_raw(segment, cfg.window_len, cfg.hop, descriptor);
  fv.values = cfg.length == LengthPolicy::Truncate ? truncate_pad(raw, cfg.dims) : resample(raw, cfg.dims);
  fv.descriptor = descriptor;
  fv.segment_id = segment_id;
  return fv;
}

MinMax MinMax::fit(const Matrix& data, std::span<const std::size_t> rows) {
  MinMax mm;
  mm.lo.assign(data.cols(), INFINITY);
  mm.hi.assign(data.cols(), -INFINITY);
  for (std::size_t r : rows) {
    const auto row = data.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      mm.lo[c] = std::min(mm.lo[c], row[c]);
      mm.hi[c] = std::max(mm.hi[c], row[c]);
    }
  }
  if (rows.empty()) {
    mm.lo.assign(data.cols(), 0.0);
    mm.hi.assign(data.cols(), 0.0);
  }
  return mm;
}

MinMax MinMax::fit(std::span<const std::vector<double>> rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(r);
  std::vector<std::size_t> idx(m.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return fit(m, idx);
}

std::vector<double> MinMax::apply(std::span<const double> x) const {
  if (x.size() != lo.size()) throw Error(ErrorCode::Size, "normalisation statistics length mismatch");
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double range = hi[c] - lo[c];
    out[c] = range > 0.0 ? (x[c] - lo[c]) / range : 0.0;
  }
  return out;
}

FeatureVector fuse(const FeatureVector& rms_norm, const FeatureVector& mad_norm, FusionStrategy strategy) {
  const auto& a = rms_norm.values;
  const auto& b = mad_norm.values;
  if (a.size() != b.size()) {
    throw Error(ErrorCode::Size, "fusion inputs differ in length (" + std::to_string(a.size()) + " vs " +
                                     std::to_string(b.size()) + ")");
  }
  FeatureVector out;
  out.fused = strategy;
  out.segment_id = rms_norm.segment_id;
  switch (strategy) {
    case FusionStrategy::Summation:
      out.values.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a[i] + b[i];
      break;
    case FusionStrategy::Multiplication:
      out.values.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = a[i] * b[i];
      break;
    case FusionStrategy::Concatenation:
      out.values = a;
      out.values.insert(out.values.end(), b.begin(), b.end());
      break;
  }
  return out;
}

FeatureVector fuse(const FeatureVector& rms_vec, const FeatureVector& mad_vec, FusionStrategy strategy,
                   const MinMax& rms_stats, const MinMax& mad_stats) {
  FeatureVector a = rms_vec;
  FeatureVector b = mad_vec;
  a.values = rms_stats.apply(rms_vec.values);
  b.values = mad_stats.apply(mad_vec.values);
  return fuse(a, b, strategy);
}

std::vector<double> select_on_interval(const tracegen::PowerTrace& trace, const events::DetectorConfig& detector,
                                       std::size_t min_len) {
  if (trace.samples.size() >= 2 * detector.frame_len) {
    const auto found = events::detect_events(trace, detector);
    const auto parts = events::segment(trace, found);
    const events::TraceSegment* best = nullptr;
    for (const auto& p : parts) {
      if (p.on && p.samples.size() >= min_len && (!best || p.samples.size() > best->samples.size())) best = &p;
    }
    if (best) return best->samples;
  }
  return trace.samples;
}

DescriptorTable build_table(const tracegen::Dataset& dataset, const events::DetectorConfig& detector,
                            const FeatureConfig& cfg) {
  cfg.validate();
  DescriptorTable table;
  for (const auto& seg : dataset) {
    const auto on = select_on_interval(seg.trace, detector, cfg.window_len);
    table.rms.append_row(extract(on, cfg, Descriptor::Rms, seg.segment_id).values);
    table.mad.append_row(extract(on, cfg, Descriptor::Mad, seg.segment_id).values);
    table.labels.push_back(seg.class_id);
    table.segment_ids.push_back(seg.segment_id);
  }
  return table;
}

Matrix assemble(const DescriptorTable& table, FeatureSet set, std::span<const std::size_t> train_rows,
                std::span<const std::size_t> rows) {
  Matrix out;
  const MinMax rms_stats = MinMax::fit(table.rms, train_rows);
  const MinMax mad_stats = MinMax::fit(table.mad, train_rows);
  for (std::size_t r : rows) {
    switch (set) {
      case FeatureSet::Rms: out.append_row(rms_stats.apply(table.rms.row(r))); break;
      case FeatureSet::Mad: out.append_row(mad_stats.apply(table.mad.row(r))); break;
      default: {
        FeatureVector a{{table.rms.row(r).begin(), table.rms.row(r).end()}, Descriptor::Rms, {}, table.segment_ids[r]};
        FeatureVector b{{table.mad.row(r).begin(), table.mad.row(r).end()}, Descriptor::Mad, {}, table.segment_ids[r]};
        const auto strategy = set == FeatureSet::Summation        ? FusionStrategy::Summation
                              : set == FeatureSet::Multiplication ? FusionStrategy::Multiplication
                                                                  : FusionStrategy::Concatenation;
        out.append_row(fuse(a, b, strategy, rms_stats, mad_stats).values);
      }
    }
  }
  return out;
}

void write_features_csv(std::ostream& out, const DescriptorTable& table, const Matrix& features) {
  if (features.rows() != table.size()) throw Error(ErrorCode::Size, "feature matrix rows != table size");
  out << "segment_id,class_id";
  for (std::size_t c = 0; c < features.cols(); ++c) out << ",f_" << c;
  out << '\n';
  for (std::size_t r = 0; r < features.rows(); ++r) {
    out << table.segment_ids[r] << ',' << table.labels[r];
    for (double v : features.row(r)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace mmplug::features
