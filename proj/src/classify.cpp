#include "mmplug/classify.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "json.hpp"

namespace mmplug::classify {

namespace {

int majority(std::span<const double> votes) {
  int best = 0;
  for (std::size_t c = 1; c < votes.size(); ++c) {
    if (votes[c] > votes[best]) best = static_cast<int>(c);
  }
  return best;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

int LabeledDataset::n_classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void LabeledDataset::validate() const {
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::Size, "dataset has " + std::to_string(features.rows()) + " rows but " +
                                     std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0) throw Error(ErrorCode::InvalidArgument, "class labels must be >= 0");
  }
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (double v : features.row(r)) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "dataset contains a non-finite feature");
    }
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  for (std::size_t r : rows) {
    out.features.append_row(features.row(r));
    out.labels.push_back(labels[r]);
  }
  return out;
}

const char* to_string(Distance d) noexcept {
  switch (d) {
    case Distance::Euclidean: return "euclidean";
    case Distance::WeightedEuclidean: return "weighted-euclidean";
    case Distance::Cosine: return "cosine";
  }
  return "?";
}

int knn_predict(const LabeledDataset& train, std::span<const double> query, std::size_t k, Distance distance) {
  if (train.size() == 0) throw Error(ErrorCode::State, "knn: empty training set");
  if (k == 0 || k > train.size()) {
    throw Error(ErrorCode::InvalidArgument, "knn: k must be in [1, " + std::to_string(train.size()) + "]");
  }
  if (query.size() != train.features.cols()) throw Error(ErrorCode::Size, "knn: query dimension mismatch");

  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto row = train.features.row(i);
    dist[i] = {distance == Distance::Cosine ? cosine_distance(query, row) : euclidean(query, row), i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

  std::vector<double> votes(static_cast<std::size_t>(train.n_classes()), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto [d, idx] = dist[i];
    votes[static_cast<std::size_t>(train.labels[idx])] +=
        distance == Distance::WeightedEuclidean ? 1.0 / (d + 1e-12) : 1.0;
  }
  return majority(votes);
}

int DecisionTree::predict(std::span<const double> query) const {
  int at = 0;
  while (nodes_[at].feature >= 0) {
    const auto& n = nodes_[at];
    at = query[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes_[at].label;
}

std::size_t DecisionTree::internal_nodes() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.feature >= 0; }));
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = INFINITY;  ///< weighted child Gini
};

double gini_sum(std::span<const std::size_t> counts, std::size_t n) {
  // n * gini = n - sum(c^2) / n
  if (n == 0) return 0.0;
  double sq = 0.0;
  for (std::size_t c : counts) sq += static_cast<double>(c) * static_cast<double>(c);
  return static_cast<double>(n) - sq / static_cast<double>(n);
}

SplitChoice best_split(const LabeledDataset& data, std::span<const std::size_t> rows, std::size_t n_classes) {
  SplitChoice best;
  const std::size_t n = rows.size();
  std::vector<std::size_t> order(rows.begin(), rows.end());
  std::vector<std::size_t> total(n_classes, 0);
  for (std::size_t r : rows) ++total[static_cast<std::size_t>(data.labels[r])];

  std::vector<std::size_t> left(n_classes), right(n_classes);
  for (std::size_t f = 0; f < data.features.cols(); ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.features(a, f) < data.features(b, f); });
    std::fill(left.begin(), left.end(), 0);
    right = total;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto lbl = static_cast<std::size_t>(data.labels[order[i]]);
      ++left[lbl];
      --right[lbl];
      const double here = data.features(order[i], f);
      const double next = data.features(order[i + 1], f);
      if (!(here < next)) continue;
      const double impurity = (gini_sum(left, i + 1) + gini_sum(right, n - i - 1)) / static_cast<double>(n);
      if (impurity < best.impurity - 1e-12) {
        double mid = here + (next - here) / 2.0;
        if (!(mid < next)) mid = here;
        best = {static_cast<int>(f), mid, impurity};
      }
    }
  }
  return best;
}

int majority_label(const LabeledDataset& data, std::span<const std::size_t> rows, std::size_t n_classes) {
  std::vector<double> votes(n_classes, 0.0);
  for (std::size_t r : rows) votes[static_cast<std::size_t>(data.labels[r])] += 1.0;
  return majority(votes);
}

}  // namespace

DecisionTree dt_fit(const LabeledDataset& train, std::span<const std::size_t> rows, std::size_t max_splits) {
  if (rows.empty()) throw Error(ErrorCode::State, "decision tree: no training rows");
  const auto n_classes = static_cast<std::size_t>(train.n_classes());

  DecisionTree tree;
  tree.nodes_.push_back({-1, 0.0, -1, -1, majority_label(train, rows, n_classes)});
  std::deque<std::pair<int, std::vector<std::size_t>>> frontier;
  frontier.emplace_back(0, std::vector<std::size_t>(rows.begin(), rows.end()));

  std::size_t splits = 0;
  while (!frontier.empty() && splits < max_splits) {
    auto [node, members] = std::move(frontier.front());
    frontier.pop_front();

    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t r : members) ++counts[static_cast<std::size_t>(train.labels[r])];
    const double parent = gini_sum(counts, members.size()) / static_cast<double>(members.size());
    if (parent <= 0.0) continue;

    const SplitChoice split = best_split(train, members, n_classes);
    if (split.feature < 0 || !(split.impurity < parent - 1e-12)) continue;

    std::vector<std::size_t> lo, hi;
    for (std::size_t r : members) {
      (train.features(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? lo : hi).push_back(r);
    }
    const int left = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back({-1, 0.0, -1, -1, majority_label(train, lo, n_classes)});
    tree.nodes_.push_back({-1, 0.0, -1, -1, majority_label(train, hi, n_classes)});
    auto& parent_node = tree.nodes_[static_cast<std::size_t>(node)];
    parent_node.feature = split.feature;
    parent_node.threshold = split.threshold;
    parent_node.left = left;
    parent_node.right = left + 1;
    frontier.emplace_back(left, std::move(lo));
    frontier.emplace_back(left + 1, std::move(hi));
    ++splits;
  }
  return tree;
}

DecisionTree dt_fit(const LabeledDataset& train, std::size_t max_splits) {
  std::vector<std::size_t> rows(train.size());
  std::iota(rows.begin(), rows.end(), 0);
  return dt_fit(train, rows, max_splits);
}

BaggedEnsemble bagged_fit(const LabeledDataset& train, std::size_t n_learners, std::size_t max_splits,
                          std::uint64_t seed, bool bootstrap) {
  if (n_learners == 0) throw Error(ErrorCode::InvalidArgument, "bagging needs at least one learner");
  if (train.size() == 0) throw Error(ErrorCode::State, "bagging: empty training set");
  BaggedEnsemble ens;
  ens.n_classes_ = train.n_classes();
  const std::size_t n = train.size();
  std::vector<std::size_t> rows(n);
  for (std::size_t l = 0; l < n_learners; ++l) {
    if (bootstrap) {
      std::mt19937_64 rng(mix_seed(seed, l));
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    ens.learners_.push_back(dt_fit(train, rows, max_splits));
  }
  return ens;
}

int BaggedEnsemble::predict(std::span<const double> query) const {
  std::vector<double> votes(static_cast<std::size_t>(n_classes_), 0.0);
  for (const auto& t : learners_) votes[static_cast<std::size_t>(t.predict(query))] += 1.0;
  return majority(votes);
}

void ModelSpec::validate() const {
  switch (kind) {
    case ModelKind::Knn:
      if (k < 1) throw Error(ErrorCode::InvalidArgument, "knn: k must be >= 1");
      break;
    case ModelKind::DecisionTree:
      if (max_splits < 1) throw Error(ErrorCode::InvalidArgument, "tree: max_splits must be >= 1");
      break;
    case ModelKind::BaggedTrees:
      if (max_splits < 1 || n_learners < 1) {
        throw Error(ErrorCode::InvalidArgument, "bagging: max_splits and n_learners must be >= 1");
      }
      break;
  }
}

std::string ModelSpec::family() const {
  switch (kind) {
    case ModelKind::Knn: return "KNN";
    case ModelKind::DecisionTree: return "DT";
    case ModelKind::BaggedTrees: return "DBT";
  }
  return "?";
}

std::string ModelSpec::params() const {
  switch (kind) {
    case ModelKind::Knn: {
      const std::string kk = "K=" + std::to_string(k) + "/";
      switch (distance) {
        case Distance::Euclidean: return kk + "Euclidean distance";
        case Distance::WeightedEuclidean: return kk + "Weighted Euclidean dist";
        case Distance::Cosine: return kk + "Cosine dist";
      }
      break;
    }
    case ModelKind::DecisionTree:
      if (max_splits == 100) return "Fine, 100 splits";
      if (max_splits == 20) return "Medium, 20 splits";
      if (max_splits == 4) return "Coarse, 4 splits";
      return std::to_string(max_splits) + " splits";
    case ModelKind::BaggedTrees: {
      const std::string splits =
          max_splits % 1000 == 0 ? std::to_string(max_splits / 1000) + " k splits" : std::to_string(max_splits) + " splits";
      return std::to_string(n_learners) + " learners, " + splits;
    }
  }
  return "?";
}

std::vector<ModelSpec> benchmark_specs() {
  return {
      ModelSpec::knn(1, Distance::Euclidean),
      ModelSpec::knn(10, Distance::WeightedEuclidean),
      ModelSpec::knn(10, Distance::Cosine),
      ModelSpec::tree(100),
      ModelSpec::tree(20),
      ModelSpec::tree(4),
      ModelSpec::bagged(30, 42000),
  };
}

Model Model::fit(const ModelSpec& spec, LabeledDataset train, std::uint64_t seed) {
  spec.validate();
  train.validate();
  Model m;
  switch (spec.kind) {
    case ModelKind::Knn:
      if (train.size() == 0) throw Error(ErrorCode::State, "knn: empty training set");
      m.impl_ = Knn{std::move(train), spec.k, spec.distance};
      break;
    case ModelKind::DecisionTree:
      m.impl_ = dt_fit(train, spec.max_splits);
      break;
    case ModelKind::BaggedTrees:
      m.impl_ = bagged_fit(train, spec.n_learners, spec.max_splits, seed);
      break;
  }
  return m;
}

int Model::predict(std::span<const double> query) const {
  return std::visit(
      [&](const auto& impl) -> int {
        using T = std::decay_t<decltype(impl)>;
        if constexpr (std::is_same_v<T, Knn>) {
          return knn_predict(impl.train, query, impl.k, impl.distance);
        } else {
          return impl.predict(query);
        }
      },
      impl_);
}

Metrics metrics(const Confusion& confusion) {
  const std::size_t c = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != c) throw Error(ErrorCode::Size, "confusion matrix must be square");
  }
  Metrics m;
  m.per_class.resize(c);
  std::size_t total = 0, diag = 0;
  for (std::size_t i = 0; i < c; ++i) {
    diag += confusion[i][i];
    for (std::size_t j = 0; j < c; ++j) total += confusion[i][j];
  }
  m.accuracy = total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  double f1_sum = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t j = 0; j < c; ++j) {
      predicted += confusion[j][i];
      actual += confusion[i][j];
    }
    auto& cm = m.per_class[i];
    const double tp = static_cast<double>(confusion[i][i]);
    cm.support = actual;
    cm.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    cm.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    f1_sum += cm.f1;
  }
  m.f1_macro = c ? f1_sum / static_cast<double>(c) : 0.0;
  return m;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                        std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
  std::vector<std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw Error(ErrorCode::InvalidArgument, "class labels must be >= 0");
    const auto c = static_cast<std::size_t>(labels[i]);
    if (by_class.size() <= c) by_class.resize(c + 1);
    by_class[c].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t deal = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < folds) {
      throw Error(ErrorCode::Stratification, "class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                                                 " samples, fewer than " + std::to_string(folds) + " folds");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) out[deal++ % folds].push_back(idx);
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

EvalReport cross_validate(std::span<const int> labels, std::size_t folds, std::uint64_t seed, const FoldRunner& run) {
  const auto assignment = stratified_folds(labels, folds, seed);
  const auto n_classes = static_cast<std::size_t>(labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1);

  EvalReport report;
  report.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  report.predictions.assign(labels.size(), -1);
  for (std::size_t f = 0; f < folds; ++f) {
    const auto& test = assignment[f];
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds; ++g) {
      if (g != f) train.insert(train.end(), assignment[g].begin(), assignment[g].end());
    }
    std::sort(train.begin(), train.end());

    const auto preds = run(train, test, f);
    if (preds.size() != test.size()) throw Error(ErrorCode::Size, "fold runner returned wrong prediction count");
    FoldResult fr;
    fr.n_test = test.size();
    for (std::size_t i = 0; i < test.size(); ++i) {
      const int p = preds[i];
      if (p < 0 || static_cast<std::size_t>(p) >= n_classes) {
        throw Error(ErrorCode::State, "classifier predicted unknown class " + std::to_string(p));
      }
      const auto truth = static_cast<std::size_t>(labels[test[i]]);
      ++report.confusion[truth][static_cast<std::size_t>(p)];
      report.predictions[test[i]] = p;
      if (static_cast<std::size_t>(p) == truth) ++fr.correct;
    }
    fr.accuracy = fr.n_test ? static_cast<double>(fr.correct) / static_cast<double>(fr.n_test) : 0.0;
    report.folds.push_back(fr);
  }
  const auto m = metrics(report.confusion);
  report.accuracy = m.accuracy;
  report.f1_macro = m.f1_macro;
  report.per_class = m.per_class;
  return report;
}

EvalReport cross_validate(const LabeledDataset& dataset, const ModelSpec& spec, std::size_t folds,
                          std::uint64_t seed) {
  dataset.validate();
  spec.validate();
  return cross_validate(dataset.labels, folds, seed,
                        [&](std::span<const std::size_t> train, std::span<const std::size_t> test, std::size_t f) {
                          const Model model = Model::fit(spec, dataset.subset(train), mix_seed(seed, 1000 + f));
                          std::vector<int> out;
                          out.reserve(test.size());
                          for (std::size_t r : test) out.push_back(model.predict(dataset.features.row(r)));
                          return out;
                        });
}

std::string to_json(const EvalReport& report) {
  nlohmann::json j;
  j["accuracy"] = report.accuracy;
  j["f1_macro"] = report.f1_macro;
  j["confusion"] = report.confusion;
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    pc.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  auto& folds = j["folds"] = nlohmann::json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"n_test", f.n_test}, {"correct", f.correct}, {"accuracy", f.accuracy}});
  }
  return j.dump();
}

}  // namespace mmplug::classify
