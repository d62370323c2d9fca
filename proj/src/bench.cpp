#include "mmplug/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "mmplug/common.hpp"
#include "mmplug/events.hpp"
#include "mmplug/tracegen.hpp"

namespace mmplug::bench {

using features::FeatureSet;

const BenchCell& BenchRow::at(FeatureSet set) const {
  for (const auto& c : cells) {
    if (c.set == set) return c;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("feature set not benchmarked: ") + features::to_string(set));
}

BenchResult run_bench(const config::ExperimentConfig& cfg) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  BenchResult result;
  result.folds = cfg.folds;
  events::DetectorConfig detector = cfg.detector;
  if (cfg.auto_threshold) {
    const auto traces = events::make_validation_traces(40, mix_seed(cfg.seed, 77));
    detector.threshold = events::calibrate_threshold(traces, detector);
  }
  result.threshold = detector.threshold;

  const auto dataset = tracegen::generate_dataset(cfg.fleet, cfg.per_class, cfg.segment, cfg.seed);
  const auto table = features::build_table(dataset, detector, cfg.features);
  result.segments = table.size();

  result.sets = {FeatureSet::Rms, FeatureSet::Mad};
  for (auto s : cfg.strategies) result.sets.push_back(*features::fused_set(s));

  for (const auto& spec : cfg.models) {
    BenchRow row{spec, {}};
    for (const auto set : result.sets) {
      const classify::FoldRunner runner = [&](std::span<const std::size_t> train, std::span<const std::size_t> test,
                                              std::size_t fold) {
        classify::LabeledDataset train_ds{features::assemble(table, set, train, train), {}};
        for (auto r : train) train_ds.labels.push_back(table.labels[r]);
        const auto model = classify::Model::fit(spec, std::move(train_ds), mix_seed(cfg.seed, 1000 + fold));
        const Matrix test_x = features::assemble(table, set, train, test);
        std::vector<int> out;
        out.reserve(test.size());
        for (std::size_t i = 0; i < test_x.rows(); ++i) out.push_back(model.predict(test_x.row(i)));
        return out;
      };
      const auto report = classify::cross_validate(table.labels, cfg.folds, cfg.seed, runner);
      row.cells.push_back({set, report.accuracy, report.f1_macro});
    }
    result.rows.push_back(std::move(row));
  }
  result.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

FeatureSet headline_set(const BenchResult& result) {
  const auto has = [&](FeatureSet s) { return std::find(result.sets.begin(), result.sets.end(), s) != result.sets.end(); };
  if (has(FeatureSet::Summation)) return FeatureSet::Summation;
  if (result.sets.size() < 3) throw Error(ErrorCode::State, "no fusion strategy was benchmarked");
  return result.sets[2];
}

namespace {

const BenchRow* ensemble_row(const BenchResult& result) {
  for (const auto& r : result.rows) {
    if (r.spec.kind == classify::ModelKind::BaggedTrees) return &r;
  }
  return nullptr;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string set_label(FeatureSet s) {
  switch (s) {
    case FeatureSet::Rms: return "RMS";
    case FeatureSet::Mad: return "MAD";
    case FeatureSet::Summation: return "Summation";
    case FeatureSet::Multiplication: return "Multiplication";
    case FeatureSet::Concatenation: return "Concatenation";
  }
  return "?";
}

void render_grid(std::ostringstream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << " | ";
      out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
    }
    out << '\n';
  };
  line(header);
  for (std::size_t c = 0; c < width.size(); ++c) {
    if (c) out << "-+-";
    out << std::string(width[c], '-');
  }
  out << '\n';
  for (const auto& r : rows) line(r);
}

}  // namespace

PropertyCheck fusion_gain(const BenchResult& result) {
  PropertyCheck check;
  const auto* row = ensemble_row(result);
  if (!row) {
    check.detail = "no bagged-tree row in the benchmark";
    return check;
  }
  const auto fused = headline_set(result);
  const double single = std::max(row->at(FeatureSet::Rms).accuracy, row->at(FeatureSet::Mad).accuracy);
  const double acc = row->at(fused).accuracy;
  check.margin = 100.0 * (acc - single);
  check.holds = acc >= single;
  check.detail = "DBT " + set_label(fused) + " " + pct(acc) + "% vs best single descriptor " + pct(single) + "%";
  return check;
}

PropertyCheck ensemble_dominance(const BenchResult& result) {
  PropertyCheck check;
  const auto* row = ensemble_row(result);
  if (!row) {
    check.detail = "no bagged-tree row in the benchmark";
    return check;
  }
  const auto fused = headline_set(result);
  const double acc = row->at(fused).accuracy;
  double best_other = 0.0;
  std::string best_name = "none";
  for (const auto& r : result.rows) {
    if (&r == row) continue;
    if (r.at(fused).accuracy > best_other || best_name == "none") {
      best_other = r.at(fused).accuracy;
      best_name = r.spec.family() + " " + r.spec.params();
    }
  }
  check.margin = 100.0 * (acc - best_other);
  check.holds = acc >= best_other;
  check.detail = "DBT " + pct(acc) + "% vs best other (" + best_name + ") " + pct(best_other) + "%";
  return check;
}

PropertyCheck summation_best(const BenchResult& result) {
  PropertyCheck check;
  const auto* row = ensemble_row(result);
  if (!row) {
    check.detail = "no bagged-tree row in the benchmark";
    return check;
  }
  std::ostringstream detail;
  double sum_acc = -1.0;
  double best_other = -1.0;
  for (const auto& c : row->cells) {
    if (c.set == FeatureSet::Rms || c.set == FeatureSet::Mad) continue;
    detail << (detail.tellp() > 0 ? ", " : "") << set_label(c.set) << " " << pct(c.accuracy) << "%";
    if (c.set == FeatureSet::Summation) sum_acc = c.accuracy;
    else best_other = std::max(best_other, c.accuracy);
  }
  check.holds = sum_acc >= 0.0 && sum_acc >= best_other;
  check.margin = sum_acc >= 0.0 && best_other >= 0.0 ? 100.0 * (sum_acc - best_other) : 0.0;
  check.detail = detail.str();
  return check;
}

std::string render_table(const BenchResult& result) {
  std::ostringstream out;
  const auto fused = headline_set(result);
  out << "Descriptor fusion benchmark: " << result.segments << " segments, " << result.folds
      << "-fold stratified CV, detector threshold " << format_double(result.threshold) << "\n\n";

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : result.rows) {
    rows.push_back({r.spec.family(), r.spec.params(), pct(r.at(FeatureSet::Rms).accuracy),
                    pct(r.at(FeatureSet::Rms).f1_macro), pct(r.at(FeatureSet::Mad).accuracy),
                    pct(r.at(FeatureSet::Mad).f1_macro), pct(r.at(fused).accuracy), pct(r.at(fused).f1_macro)});
  }
  const std::string f = set_label(fused);
  render_grid(out, {"Algorithm", "Parameters", "RMS Acc", "RMS F1", "MAD Acc", "MAD F1", f + " Acc", f + " F1"},
              rows);

  if (result.sets.size() > 3) {
    out << "\nFusion strategies (Acc / F1, %)\n\n";
    std::vector<std::string> header{"Algorithm", "Parameters"};
    for (std::size_t i = 2; i < result.sets.size(); ++i) header.push_back(set_label(result.sets[i]));
    rows.clear();
    for (const auto& r : result.rows) {
      std::vector<std::string> cells{r.spec.family(), r.spec.params()};
      for (std::size_t i = 2; i < result.sets.size(); ++i) {
        cells.push_back(pct(r.cells[i].accuracy) + " / " + pct(r.cells[i].f1_macro));
      }
      rows.push_back(std::move(cells));
    }
    render_grid(out, header, rows);
  }
  return out.str();
}

std::string render_csv(const BenchResult& result) {
  std::ostringstream out;
  out << "model,params,descriptor,accuracy,f1_macro\n";
  char buf[64];
  for (const auto& r : result.rows) {
    for (const auto& c : r.cells) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", c.accuracy, c.f1_macro);
      out << r.spec.family() << ",\"" << r.spec.params() << "\"," << features::to_string(c.set) << ',' << buf << '\n';
    }
  }
  return out.str();
}

std::string render_json(const BenchResult& result) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto& r : result.rows) {
    json cells = json::object();
    for (const auto& c : r.cells) cells[features::to_string(c.set)] = {{"accuracy", c.accuracy}, {"f1_macro", c.f1_macro}};
    rows.push_back({{"model", r.spec.family()}, {"params", r.spec.params()}, {"results", cells}});
  }
  auto check_json = [](const PropertyCheck& c) {
    return json{{"holds", c.holds}, {"margin_points", c.margin}, {"detail", c.detail}};
  };
  const json doc{{"segments", result.segments},
                 {"folds", result.folds},
                 {"threshold", result.threshold},
                 {"rows", rows},
                 {"fusion_gain", check_json(fusion_gain(result))},
                 {"ensemble_dominance", check_json(ensemble_dominance(result))},
                 {"summation_best", check_json(summation_best(result))}};
  return doc.dump(2) + "\n";
}

}  // namespace mmplug::bench
