#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mmplug/classify.hpp"
#include "mmplug/common.hpp"

using namespace mmplug;
using namespace mmplug::classify;

namespace {

LabeledDataset make(std::vector<std::vector<double>> rows, std::vector<int> labels) {
  LabeledDataset d;
  d.features = Matrix(0, rows.empty() ? 0 : rows[0].size());
  for (const auto& r : rows) d.features.append_row(r);
  d.labels = std::move(labels);
  return d;
}

/// Balanced blobs around class-specific centres.
LabeledDataset blobs(std::size_t per_class, int classes, std::size_t dims, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, spread);
  LabeledDataset d;
  d.features = Matrix(0, dims);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> row(dims);
      for (std::size_t k = 0; k < dims; ++k) row[k] = double(c) * 3.0 + (k % 2 ? -1.0 : 1.0) * double(c) + n(rng);
      d.features.append_row(row);
      d.labels.push_back(c);
    }
  }
  return d;
}

}  // namespace

TEST_SUITE("classify") {

TEST_CASE("knn examples") {
  const auto d = make({{0.0}, {1.0}, {2.0}, {10.0}}, {0, 0, 1, 2});
  CHECK(knn_predict(d, std::vector{10.0}, 1, Distance::Euclidean) == 2);
  const auto two = make({{1.0}, {2.0}}, {0, 1});
  CHECK(knn_predict(two, std::vector{0.0}, 1, Distance::Euclidean) == 0);
  const auto three = make({{0.0}, {0.1}, {0.2}, {5.0}}, {0, 0, 1, 1});
  CHECK(knn_predict(three, std::vector{0.05}, 3, Distance::Euclidean) == 0);
}

TEST_CASE("knn ties go to the smallest class id") {
  const auto d = make({{-1.0}, {1.0}}, {1, 0});
  CHECK(knn_predict(d, std::vector{0.0}, 2, Distance::Euclidean) == 0);
  CHECK(knn_predict(d, std::vector{0.0}, 2, Distance::WeightedEuclidean) == 0);
}

TEST_CASE("weighted knn favours the closest neighbour") {
  // two far class-1 points outvote one near class-0 point only without weights
  const auto d = make({{0.1}, {3.0}, {3.1}}, {0, 1, 1});
  CHECK(knn_predict(d, std::vector{0.0}, 3, Distance::Euclidean) == 1);
  CHECK(knn_predict(d, std::vector{0.0}, 3, Distance::WeightedEuclidean) == 0);
}

TEST_CASE("cosine distance ignores magnitude") {
  const auto d = make({{1.0, 0.0}, {0.0, 1.0}}, {0, 1});
  CHECK(knn_predict(d, std::vector{100.0, 1.0}, 1, Distance::Cosine) == 0);
  CHECK(knn_predict(d, std::vector{0.1, 5.0}, 1, Distance::Cosine) == 1);
}

TEST_CASE("knn argument errors") {
  LabeledDataset empty;
  try {
    knn_predict(empty, std::vector<double>{}, 1, Distance::Euclidean);
    FAIL("empty train accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
  }
  const auto d = make({{1.0}}, {0});
  CHECK_THROWS_AS(knn_predict(d, std::vector{1.0}, 2, Distance::Euclidean), Error);
  CHECK_THROWS_AS(knn_predict(d, std::vector{1.0, 2.0}, 1, Distance::Euclidean), Error);
}

TEST_CASE("1-NN self accuracy is perfect on distinct points") {
  const auto d = blobs(20, 4, 3, 2.0, 3);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    correct += knn_predict(d, d.features.row(i), 1, Distance::Euclidean) == d.labels[i];
  }
  CHECK(correct == d.size());
}

TEST_CASE("single-class tree is one leaf") {
  const auto d = make({{1.0}, {2.0}, {3.0}}, {2, 2, 2});
  const auto t = dt_fit(d, 100);
  CHECK(t.internal_nodes() == 0);
  CHECK(t.leaves() == 1);
  CHECK(t.predict(std::vector{-50.0}) == 2);
}

TEST_CASE("separable 1-D data needs one split") {
  const auto d = make({{-3.0}, {-2.0}, {-1.0}, {1.0}, {2.0}, {3.0}}, {0, 0, 0, 1, 1, 1});
  const auto t = dt_fit(d, 100);
  CHECK(t.internal_nodes() == 1);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(t.predict(d.features.row(i)) == d.labels[i]);
}

TEST_CASE("max_splits bounds internal nodes") {
  const auto d = blobs(30, 5, 4, 4.0, 17);
  for (std::size_t cap : {1u, 4u, 20u, 100u}) {
    const auto t = dt_fit(d, cap);
    CHECK(t.internal_nodes() <= cap);
    CHECK(t.leaves() == t.internal_nodes() + 1);
  }
}

TEST_CASE("degenerate ensemble equals a single tree") {
  const auto d = blobs(15, 3, 2, 3.0, 5);
  const auto t = dt_fit(d, 20);
  const auto e = bagged_fit(d, 1, 20, 123, false);
  const auto probe = blobs(10, 3, 2, 5.0, 6);
  for (std::size_t i = 0; i < probe.size(); ++i) CHECK(e.predict(probe.features.row(i)) == t.predict(probe.features.row(i)));
}

TEST_CASE("bagging on single-class data and determinism") {
  const auto one = make({{1.0}, {2.0}, {3.0}}, {1, 1, 1});
  CHECK(bagged_fit(one, 5, 10, 1).predict(std::vector{9.0}) == 1);

  const auto d = blobs(20, 3, 2, 3.0, 8);
  const auto probe = blobs(10, 3, 2, 5.0, 9);
  const auto a = bagged_fit(d, 30, 42000, 77);
  const auto b = bagged_fit(d, 30, 42000, 77);
  CHECK(a.learners().size() == 30);
  for (std::size_t i = 0; i < probe.size(); ++i) CHECK(a.predict(probe.features.row(i)) == b.predict(probe.features.row(i)));
}

TEST_CASE("metrics on hand-computed confusions") {
  const auto m = metrics({{5, 5}, {5, 5}});
  CHECK(m.accuracy == 0.5);
  CHECK(m.f1_macro == 0.5);
  CHECK(m.per_class[0].precision == 0.5);
  CHECK(m.per_class[1].recall == 0.5);

  const auto perfect = metrics({{10, 0}, {0, 10}});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1_macro == 1.0);

  // class 1 never predicted
  const auto skew = metrics({{10, 0}, {10, 0}});
  CHECK(skew.per_class[1].f1 == 0.0);
  CHECK(skew.f1_macro == doctest::Approx((2.0 * 0.5 * 1.0 / 1.5 + 0.0) / 2.0));

  CHECK_THROWS_AS(metrics({{1, 2}}), Error);
}

TEST_CASE("stratified folds partition the samples") {
  std::vector<int> labels;
  for (int c = 0; c < 5; ++c) labels.insert(labels.end(), 40, c);
  const auto folds = stratified_folds(labels, 10, 42);
  REQUIRE(folds.size() == 10);
  std::vector<int> seen(labels.size(), 0);
  for (const auto& f : folds) {
    CHECK(f.size() == 20);
    std::vector<int> per_class(5, 0);
    for (auto i : f) {
      ++seen[i];
      ++per_class[labels[i]];
    }
    for (int c : per_class) CHECK(c == 4);
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(stratified_folds(labels, 10, 42) == folds);
}

TEST_CASE("stratification error when a class is too small") {
  std::vector<int> labels(30, 0);
  labels.insert(labels.end(), 5, 1);
  try {
    stratified_folds(labels, 10, 1);
    FAIL("infeasible stratification accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Stratification);
  }
}

TEST_CASE("cv: every sample tested once, trace / N is the accuracy") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> labels;
    const int classes = 2 + trial % 4;
    for (int c = 0; c < classes; ++c) labels.insert(labels.end(), 10 + trial, c);
    std::vector<int> tested(labels.size(), 0);
    std::uniform_int_distribution<int> guess(0, classes - 1);
    const auto report = cross_validate(labels, 10, trial, [&](auto, std::span<const std::size_t> test, std::size_t) {
      std::vector<int> out;
      for (auto i : test) {
        ++tested[i];
        out.push_back(guess(rng));
      }
      return out;
    });
    for (int t : tested) CHECK(t == 1);
    std::size_t trace = 0, total = 0;
    for (std::size_t i = 0; i < report.confusion.size(); ++i) {
      std::size_t row = 0;
      for (auto v : report.confusion[i]) row += v;
      CHECK(row == static_cast<std::size_t>(std::count(labels.begin(), labels.end(), int(i))));
      trace += report.confusion[i][i];
      total += row;
    }
    CHECK(total == labels.size());
    CHECK(std::abs(report.accuracy - double(trace) / double(total)) <= 1e-12);
    CHECK(report.predictions.size() == labels.size());
  }
}

TEST_CASE("cv on perfect and constant classifiers") {
  LabeledDataset d;
  d.features = Matrix(0, 1);
  for (int c = 0; c < 5; ++c) {
    for (int i = 0; i < 40; ++i) {
      d.features.append_row(std::vector{double(c)});
      d.labels.push_back(c);
    }
  }
  const auto perfect = cross_validate(d, ModelSpec::knn(1, Distance::Euclidean), 10, 42);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f1_macro == 1.0);
  REQUIRE(perfect.folds.size() == 10);
  for (const auto& f : perfect.folds) CHECK(f.n_test == 20);

  const auto constant = cross_validate(d.labels, 10, 42, [](auto, std::span<const std::size_t> test, std::size_t) {
    return std::vector<int>(test.size(), 0);
  });
  CHECK(constant.accuracy == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("model specs and report json") {
  const auto specs = benchmark_specs();
  CHECK(specs.size() == 7);
  CHECK(specs.back().family() == "DBT");
  CHECK(specs.back().n_learners == 30);
  CHECK(specs.back().max_splits == 42000);
  CHECK(specs[3].params() == "Fine, 100 splits");
  CHECK_THROWS_AS(ModelSpec::knn(0, Distance::Euclidean).validate(), Error);
  CHECK_THROWS_AS(ModelSpec::tree(0).validate(), Error);

  const auto d = blobs(10, 2, 2, 1.0, 1);
  const auto report = cross_validate(d, ModelSpec::tree(4), 5, 3);
  const auto j = nlohmann::json::parse(to_json(report));
  CHECK(j["accuracy"].get<double>() == report.accuracy);
  CHECK(j["confusion"].size() == 2);
}

TEST_CASE("dataset validation") {
  auto d = make({{1.0}, {2.0}}, {0});
  CHECK_THROWS_AS(d.validate(), Error);
  d = make({{1.0}, {std::nan("")}}, {0, 1});
  CHECK_THROWS_AS(d.validate(), Error);
}

}
