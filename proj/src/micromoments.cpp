#include "mmplug/micromoments.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mmplug/common.hpp"

namespace mmplug::moments {

const char* to_string(MomentClass c) noexcept {
  switch (c) {
    case MomentClass::GoodUsage: return "good_usage";
    case MomentClass::TurnOn: return "turn_on";
    case MomentClass::TurnOff: return "turn_off";
    case MomentClass::ExcessiveConsumption: return "excessive_consumption";
    case MomentClass::ConsumptionWhileVacant: return "consumption_while_vacant";
  }
  return "?";
}

double MomentRules::excessive_for(const std::string& device) const {
  const auto it = excessive_by_device.find(device);
  return it == excessive_by_device.end() ? excessive_threshold_watts : it->second;
}

void MomentRules::validate(const std::string& device) const {
  if (!(slot_len_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "slot length must be > 0");
  const double excessive = excessive_for(device);
  if (!(active_threshold_watts > 0.0) || !(excessive > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "moment thresholds must be > 0");
  }
  if (!(excessive > active_threshold_watts)) {
    throw Error(ErrorCode::InvalidArgument, "excessive threshold must exceed the active threshold");
  }
}

std::vector<MicroMoment> classify_slots(const tracegen::PowerTrace& power, std::span<const bool> occupancy,
                                        const MomentRules& rules, std::span<const events::Event> events) {
  rules.validate(power.device_id);
  const auto& x = power.samples;
  if (occupancy.size() != x.size()) {
    throw Error(ErrorCode::Alignment, "occupancy has " + std::to_string(occupancy.size()) + " samples, power has " +
                                          std::to_string(x.size()));
  }
  const auto slot = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rules.slot_len_s * power.sample_rate_hz)));
  const double excessive = rules.excessive_for(power.device_id);

  std::vector<MicroMoment> out;
  for (std::size_t begin = 0; begin < x.size(); begin += slot) {
    const std::size_t end = std::min(x.size(), begin + slot);
    MicroMoment m;
    m.slot_start_ms = power.timestamp_ms(begin);
    m.slot_len_s = static_cast<double>(end - begin) / power.sample_rate_hz;
    m.device_id = power.device_id;

    double sum = 0.0;
    std::size_t vacant = 0;
    for (std::size_t i = begin; i < end; ++i) {
      sum += x[i];
      if (!occupancy[i]) ++vacant;
    }
    m.mean_watts = sum / static_cast<double>(end - begin);
    m.occupied = 2 * vacant <= end - begin;

    bool on_edge = false, off_edge = false;
    for (const auto& e : events) {
      if (e.boundary_index >= begin && e.boundary_index < end) {
        (e.kind == events::EventKind::TurnOn ? on_edge : off_edge) = true;
      }
    }
    if (on_edge) {
      m.cls = MomentClass::TurnOn;
    } else if (off_edge) {
      m.cls = MomentClass::TurnOff;
    } else if (m.mean_watts >= rules.active_threshold_watts && !m.occupied) {
      m.cls = MomentClass::ConsumptionWhileVacant;
    } else if (m.mean_watts >= excessive) {
      m.cls = MomentClass::ExcessiveConsumption;
    } else {
      m.cls = MomentClass::GoodUsage;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MicroMoment> classify_slots(const tracegen::PowerTrace& power, std::span<const bool> occupancy,
                                        const MomentRules& rules) {
  std::vector<events::Event> found;
  if (power.samples.size() >= 2 * rules.detector.frame_len) found = events::detect_events(power, rules.detector);
  return classify_slots(power, occupancy, rules, found);
}

MomentSummary moment_summary(std::span<const MicroMoment> moments) {
  if (moments.empty()) throw Error(ErrorCode::State, "no micro-moments to summarise");
  MomentSummary s;
  for (const auto& m : moments) ++s.counts[static_cast<std::size_t>(m.cls)];
  s.slots = moments.size();
  const auto wasted = s.counts[static_cast<std::size_t>(MomentClass::ExcessiveConsumption)] +
                      s.counts[static_cast<std::size_t>(MomentClass::ConsumptionWhileVacant)];
  s.wasted_fraction = static_cast<double>(wasted) / static_cast<double>(s.slots);
  return s;
}

void write_moments_csv(std::ostream& out, std::span<const MicroMoment> moments) {
  out << "slot_start,device_id,class,mean_watts,occupied\n";
  for (const auto& m : moments) {
    out << m.slot_start_ms << ',' << m.device_id << ',' << to_string(m.cls) << ',' << format_double(m.mean_watts)
        << ',' << (m.occupied ? "true" : "false") << '\n';
  }
}

namespace {

const char* shade(MomentClass c) {
  switch (c) {
    case MomentClass::GoodUsage: return "#e8f5e9";
    case MomentClass::TurnOn: return "#bbdefb";
    case MomentClass::TurnOff: return "#d1c4e9";
    case MomentClass::ExcessiveConsumption: return "#ffcdd2";
    case MomentClass::ConsumptionWhileVacant: return "#ffe0b2";
  }
  return "#ffffff";
}

}  // namespace

void write_moments_svg(std::ostream& out, const tracegen::PowerTrace& power, std::span<const MicroMoment> moments) {
  constexpr double kW = 960, kH = 320, kPad = 40;
  const auto& x = power.samples;
  const double n = static_cast<double>(std::max<std::size_t>(x.size(), 2) - 1);
  const double peak = x.empty() ? 1.0 : std::max(1.0, *std::max_element(x.begin(), x.end()));
  auto px = [&](double i) { return kPad + (kW - 2 * kPad) * i / n; };
  auto py = [&](double w) { return kH - kPad - (kH - 2 * kPad) * w / peak; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<title>" << power.device_id << " power and micro-moments</title>\n";
  std::size_t start = 0;
  for (const auto& m : moments) {
    const auto len = static_cast<std::size_t>(std::llround(m.slot_len_s * power.sample_rate_hz));
    out << "<rect x=\"" << px(static_cast<double>(start)) << "\" y=\"" << kPad << "\" width=\""
        << px(static_cast<double>(start + len)) - px(static_cast<double>(start)) << "\" height=\"" << kH - 2 * kPad
        << "\" fill=\"" << shade(m.cls) << "\"><title>" << to_string(m.cls) << "</title></rect>\n";
    start += len;
  }
  out << "<polyline fill=\"none\" stroke=\"#1a237e\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < x.size(); ++i) out << px(static_cast<double>(i)) << ',' << py(x[i]) << ' ';
  out << "\"/>\n";
  out << "<text x=\"" << kPad << "\" y=\"" << kPad - 10 << "\" font-size=\"12\">peak " << peak << " W</text>\n";
  out << "</svg>\n";
}

}  // namespace mmplug::moments
