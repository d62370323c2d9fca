#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mmplug/common.hpp"

namespace mmplug::classify {

struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// max label + 1
  int n_classes() const;
  /// Throws on row/label count mismatch, negative labels or non-finite entries.
  void validate() const;
  LabeledDataset subset(std::span<const std::size_t> rows) const;
};

enum class Distance { Euclidean, WeightedEuclidean, Cosine };

const char* to_string(Distance d) noexcept;

int knn_predict(const LabeledDataset& train, std::span<const double> query, std::size_t k, Distance distance);

/// Binary CART tree over Gini impurity.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;   ///< x[feature] <= threshold
    int right = -1;
    int label = 0;   ///< majority class at this node
  };

  int predict(std::span<const double> query) const;
  std::size_t internal_nodes() const noexcept;
  std::size_t leaves() const noexcept { return nodes_.size() - internal_nodes(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  friend DecisionTree dt_fit(const LabeledDataset&, std::span<const std::size_t>, std::size_t);
  std::vector<Node> nodes_;
};

/// Grows breadth-first until `max_splits` internal nodes exist or every
/// frontier leaf is pure / unsplittable. Rows may repeat (bootstrap samples).
DecisionTree dt_fit(const LabeledDataset& train, std::span<const std::size_t> rows, std::size_t max_splits);
DecisionTree dt_fit(const LabeledDataset& train, std::size_t max_splits);

class BaggedEnsemble {
 public:
  int predict(std::span<const double> query) const;
  const std::vector<DecisionTree>& learners() const noexcept { return learners_; }

 private:
  friend BaggedEnsemble bagged_fit(const LabeledDataset&, std::size_t, std::size_t, std::uint64_t, bool);
  std::vector<DecisionTree> learners_;
  int n_classes_ = 0;
};

/// `bootstrap = false` fits every learner on the training rows as given.
BaggedEnsemble bagged_fit(const LabeledDataset& train, std::size_t n_learners, std::size_t max_splits,
                          std::uint64_t seed, bool bootstrap = true);

enum class ModelKind { Knn, DecisionTree, BaggedTrees };

struct ModelSpec {
  ModelKind kind = ModelKind::Knn;
  std::size_t k = 1;
  Distance distance = Distance::Euclidean;
  std::size_t max_splits = 100;
  std::size_t n_learners = 30;

  static ModelSpec knn(std::size_t k, Distance d) { return {ModelKind::Knn, k, d, 0, 0}; }
  static ModelSpec tree(std::size_t max_splits) { return {ModelKind::DecisionTree, 0, {}, max_splits, 0}; }
  static ModelSpec bagged(std::size_t n_learners, std::size_t max_splits) {
    return {ModelKind::BaggedTrees, 0, {}, max_splits, n_learners};
  }

  void validate() const;
  /// Algorithm column of the benchmark table ("KNN", "DT", "DBT").
  std::string family() const;
  /// Parameter column, e.g. "K=10/Weighted Euclidean dist".
  std::string params() const;
};

/// The KNN, DT and DBT rows of the benchmark.
std::vector<ModelSpec> benchmark_specs();

/// A fitted model; immutable and safe to share between threads.
class Model {
 public:
  static Model fit(const ModelSpec& spec, LabeledDataset train, std::uint64_t seed);
  int predict(std::span<const double> query) const;

 private:
  struct Knn {
    LabeledDataset train;
    std::size_t k;
    Distance distance;
  };
  std::variant<Knn, DecisionTree, BaggedEnsemble> impl_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::vector<ClassMetrics> per_class;
};

using Confusion = std::vector<std::vector<std::size_t>>;  ///< [true][predicted]

Metrics metrics(const Confusion& confusion);

struct FoldResult {
  std::size_t n_test = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::vector<ClassMetrics> per_class;
  Confusion confusion;
  std::vector<FoldResult> folds;
  std::vector<int> predictions;  ///< out-of-fold prediction per sample
};

/// Stratified assignment: each class is shuffled (seeded) and dealt
/// round-robin, continuing the dealing position across classes.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                        std::uint64_t seed);

/// Produces predictions for `test` after training on `train` (fold index given).
using FoldRunner = std::function<std::vector<int>(std::span<const std::size_t> train,
                                                  std::span<const std::size_t> test, std::size_t fold)>;

EvalReport cross_validate(std::span<const int> labels, std::size_t folds, std::uint64_t seed, const FoldRunner& run);

/// Cross-validates `spec` on the dataset's features as-is.
EvalReport cross_validate(const LabeledDataset& dataset, const ModelSpec& spec, std::size_t folds,
                          std::uint64_t seed);

std::string to_json(const EvalReport& report);

}  // namespace mmplug::classify
