#include "mmplug/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "mmplug/common.hpp"

namespace mmplug::config {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::Config, key + ": " + why);
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t section_index(const std::string& section, std::string_view prefix) {
  const std::string digits = section.substr(prefix.size());
  return static_cast<std::size_t>(to_uint(section, digits));
}

classify::Distance parse_distance(const std::string& key, const std::string& v) {
  if (v == "euclidean") return classify::Distance::Euclidean;
  if (v == "weighted" || v == "weighted_euclidean") return classify::Distance::WeightedEuclidean;
  if (v == "cosine") return classify::Distance::Cosine;
  bad(key, "unknown distance '" + v + "'");
}

void apply_appliance(ExperimentConfig& cfg, std::size_t idx, const std::string& key, const std::string& v,
                     const std::string& full) {
  if (idx > cfg.fleet.size()) bad(full, "appliance sections must be numbered contiguously from 0");
  if (idx == cfg.fleet.size()) {
    tracegen::ApplianceModel m;
    m.class_id = static_cast<int>(idx);
    m.name = "appliance-" + std::to_string(idx);
    cfg.fleet.push_back(m);
  }
  auto& m = cfg.fleet[idx];
  if (key == "name") m.name = v;
  else if (key == "steady_watts") m.steady_watts = to_double(full, v);
  else if (key == "transient_peak_watts") m.transient_peak_watts = to_double(full, v);
  else if (key == "transient_duration_s") m.transient_duration_s = to_double(full, v);
  else if (key == "ripple_amplitude_watts") m.ripple_amplitude_watts = to_double(full, v);
  else if (key == "ripple_period_s") m.ripple_period_s = to_double(full, v);
  else if (key == "noise_sigma_watts") m.noise_sigma_watts = to_double(full, v);
  else bad(full, "unknown key");
}

void apply_model(ExperimentConfig& cfg, std::size_t idx, const std::string& key, const std::string& v,
                 const std::string& full) {
  if (idx > cfg.models.size()) bad(full, "model sections must be numbered contiguously from 0");
  if (idx == cfg.models.size()) cfg.models.push_back(classify::ModelSpec::knn(1, classify::Distance::Euclidean));
  auto& m = cfg.models[idx];
  if (key == "kind") {
    if (v == "knn") m.kind = classify::ModelKind::Knn;
    else if (v == "tree") m.kind = classify::ModelKind::DecisionTree;
    else if (v == "bagged") m.kind = classify::ModelKind::BaggedTrees;
    else bad(full, "unknown model kind '" + v + "'");
    if (m.kind != classify::ModelKind::Knn && m.max_splits == 0) m.max_splits = 100;
    if (m.kind == classify::ModelKind::BaggedTrees && m.n_learners == 0) m.n_learners = 30;
  } else if (key == "k") {
    m.k = to_uint(full, v);
  } else if (key == "distance") {
    m.distance = parse_distance(full, v);
  } else if (key == "max_splits") {
    m.max_splits = to_uint(full, v);
  } else if (key == "learners") {
    m.n_learners = to_uint(full, v);
  } else {
    bad(full, "unknown key");
  }
}

void apply(ExperimentConfig& cfg, const std::string& section, const std::string& key, std::string value) {
  const std::string full = section + "." + key;
  const std::string v = trim(std::move(value));
  if (section == "experiment") {
    if (key == "seed") cfg.seed = to_uint(full, v);
    else if (key == "per_class") cfg.per_class = static_cast<int>(to_uint(full, v));
    else if (key == "folds") cfg.folds = to_uint(full, v);
    else if (key == "classes") {
      const auto c = to_uint(full, v);
      if (c < 2 || c > cfg.fleet.size()) bad(full, "must be in [2, " + std::to_string(cfg.fleet.size()) + "]");
      cfg.fleet.resize(c);
    } else if (key == "strategies") {
      cfg.strategies.clear();
      std::stringstream ss(v);
      for (std::string item; std::getline(ss, item, ',');) {
        const auto s = features::parse_fusion(trim(item));
        if (!s) bad(full, "unknown fusion strategy '" + trim(item) + "'");
        if (std::find(cfg.strategies.begin(), cfg.strategies.end(), *s) == cfg.strategies.end()) {
          cfg.strategies.push_back(*s);
        }
      }
    } else bad(full, "unknown key");
  } else if (section == "segment") {
    auto& s = cfg.segment;
    if (key == "duration_s") s.duration_s = to_double(full, v);
    else if (key == "sample_rate_hz") s.sample_rate_hz = to_double(full, v);
    else if (key == "jitter") s.jitter = to_double(full, v);
    else if (key == "sensor_tolerance") s.sensor_tolerance = to_double(full, v);
    else if (key == "on_min_s") s.on_min_s = to_double(full, v);
    else if (key == "on_max_s") s.on_max_s = to_double(full, v);
    else if (key == "off_min_s") s.off_min_s = to_double(full, v);
    else if (key == "off_max_s") s.off_max_s = to_double(full, v);
    else bad(full, "unknown key");
  } else if (section == "detector") {
    auto& d = cfg.detector;
    if (key == "frame_len") d.frame_len = to_uint(full, v);
    else if (key == "hop") d.hop = to_uint(full, v);
    else if (key == "n_coeffs") d.n_coeffs = to_uint(full, v);
    else if (key == "log_floor") d.log_floor = to_double(full, v);
    else if (key == "threshold") {
      if (v == "auto") {
        cfg.auto_threshold = true;
      } else {
        d.threshold = to_double(full, v);
        cfg.auto_threshold = false;
      }
    } else bad(full, "unknown key");
  } else if (section == "features") {
    auto& f = cfg.features;
    if (key == "window_len") f.window_len = to_uint(full, v);
    else if (key == "hop") f.hop = to_uint(full, v);
    else if (key == "dims") f.dims = to_uint(full, v);
    else if (key == "length") {
      if (v == "truncate") f.length = features::LengthPolicy::Truncate;
      else if (v == "resample") f.length = features::LengthPolicy::Resample;
      else bad(full, "expected truncate or resample");
    }
    else bad(full, "unknown key");
  } else if (section.starts_with("appliance.")) {
    apply_appliance(cfg, section_index(section, "appliance."), key, v, full);
  } else if (section.starts_with("model.")) {
    apply_model(cfg, section_index(section, "model."), key, v, full);
  } else {
    bad(full, "unknown section");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    if (per_class < 1) bad("experiment.per_class", "must be >= 1");
    if (folds < 2) bad("experiment.folds", "must be >= 2");
    if (static_cast<std::size_t>(per_class) < folds) bad("experiment.per_class", "must be >= folds");
    if (fleet.size() < 2) bad("experiment.classes", "need at least two appliance classes");
    if (strategies.empty()) bad("experiment.strategies", "need at least one fusion strategy");
    if (models.empty()) bad("model", "need at least one model");
    for (std::size_t i = 0; i < fleet.size(); ++i) {
      if (fleet[i].class_id != static_cast<int>(i)) bad("appliance." + std::to_string(i), "class_id must equal index");
      fleet[i].validate();
    }
    segment.validate();
    detector.validate();
    features.validate();
    for (const auto& m : models) m.validate();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    throw Error(ErrorCode::Config, e.what());
  }
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::Config, std::string("config syntax: ") + e.what());
  }

  ExperimentConfig cfg;
  std::map<std::size_t, const pt::ptree*> appliances;
  std::map<std::size_t, const pt::ptree*> models;
  std::vector<std::pair<std::string, const pt::ptree*>> plain;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error(ErrorCode::Config, section + ": top-level keys must be inside a section");
    if (section.starts_with("appliance.")) appliances[section_index(section, "appliance.")] = &body;
    else if (section.starts_with("model.")) models[section_index(section, "model.")] = &body;
    else plain.emplace_back(section, &body);
  }
  for (const auto& [idx, body] : appliances) {
    for (const auto& [key, node] : *body) apply(cfg, "appliance." + std::to_string(idx), key, node.data());
  }
  if (!models.empty()) cfg.models.clear();
  for (const auto& [idx, body] : models) {
    for (const auto& [key, node] : *body) apply(cfg, "model." + std::to_string(idx), key, node.data());
  }
  // [experiment] last so `classes` sees the final fleet
  std::stable_partition(plain.begin(), plain.end(), [](const auto& p) { return p.first != "experiment"; });
  for (const auto& [section, body] : plain) {
    for (const auto& [key, node] : *body) apply(cfg, section, key, node.data());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  return parse_config(in);
}

void apply_setting(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw Error(ErrorCode::Config, "setting must look like section.key, got '" + dotted_key + "'");
  }
  apply(cfg, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
}

}  // namespace mmplug::config
