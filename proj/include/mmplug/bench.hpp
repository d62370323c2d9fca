#pragma once

#include <string>
#include <vector>

#include "mmplug/classify.hpp"
#include "mmplug/config.hpp"
#include "mmplug/features.hpp"

namespace mmplug::bench {

struct BenchCell {
  features::FeatureSet set;
  double accuracy = 0.0;
  double f1_macro = 0.0;
};

struct BenchRow {
  classify::ModelSpec spec;
  std::vector<BenchCell> cells;  ///< same order as BenchResult::sets

  const BenchCell& at(features::FeatureSet set) const;
};

struct BenchResult {
  double threshold = 0.0;
  std::size_t segments = 0;
  std::size_t folds = 0;
  std::vector<features::FeatureSet> sets;  ///< RMS, MAD, then each configured fusion
  std::vector<BenchRow> rows;
  double runtime_s = 0.0;  ///< wall time; never rendered into CSV
};

/// Generates the dataset, detects on-intervals, extracts descriptors and
/// cross-validates every model on every feature set.
BenchResult run_bench(const config::ExperimentConfig& cfg);

/// The fused set the headline checks use: Summation when configured,
/// otherwise the first configured strategy.
features::FeatureSet headline_set(const BenchResult& result);

struct PropertyCheck {
  bool holds = false;
  double margin = 0.0;  ///< accuracy points (0-100)
  std::string detail;
};

/// Bagged-tree headline fusion accuracy >= max(RMS-only, MAD-only).
PropertyCheck fusion_gain(const BenchResult& result);
/// Bagged-tree headline fusion accuracy >= every other row's.
PropertyCheck ensemble_dominance(const BenchResult& result);
/// Summation is the best strategy for the bagged-tree row.
PropertyCheck summation_best(const BenchResult& result);

/// Two text tables: per-descriptor results with the headline fusion, then
/// every fusion strategy side by side.
std::string render_table(const BenchResult& result);
/// `model,params,descriptor,accuracy,f1_macro`, one line per cell.
std::string render_csv(const BenchResult& result);
std::string render_json(const BenchResult& result);

}  // namespace mmplug::bench
