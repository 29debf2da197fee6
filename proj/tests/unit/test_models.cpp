#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "flowcascade/error.hpp"
#include "flowcascade/models.hpp"

using namespace flowcascade;
namespace fs = std::filesystem;

namespace {

// Rows of width 1024 where only the listed leading cells are set.
TernaryMatrix matrix_from(const std::vector<std::vector<std::int8_t>>& prefixes) {
  TernaryMatrix X(prefixes.size(), kPacketCells, kAbsent);
  for (std::size_t r = 0; r < prefixes.size(); ++r) {
    for (std::size_t c = 0; c < prefixes[r].size(); ++c) X.at(r, c) = prefixes[r][c];
  }
  return X;
}

struct Toy {
  TernaryMatrix X;
  std::vector<int> y;
};

Toy xor_data(int reps) {
  std::vector<std::vector<std::int8_t>> rows;
  std::vector<int> y;
  for (int r = 0; r < reps; ++r) {
    for (std::int8_t a : {0, 1}) {
      for (std::int8_t b : {0, 1}) {
        rows.push_back({a, b});
        y.push_back(a ^ b);
      }
    }
  }
  return {matrix_from(rows), y};
}

Toy noisy_data(std::uint32_t seed, int n, int n_classes) {
  std::mt19937 rng(seed);
  std::vector<std::vector<std::int8_t>> rows;
  std::vector<int> y;
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng() % static_cast<unsigned>(n_classes));
    std::vector<std::int8_t> row(40);
    for (std::size_t c = 0; c < row.size(); ++c) {
      const bool signal = c < 8 && ((label >> (c % 3)) & 1);
      const int v = (rng() % 5 == 0) ? static_cast<int>(rng() % 2) : static_cast<int>(signal);
      row[c] = static_cast<std::int8_t>(c >= 30 && rng() % 3 == 0 ? -1 : v);
    }
    rows.push_back(row);
    y.push_back(label);
  }
  return {matrix_from(rows), y};
}

std::vector<std::int8_t> random_input(std::mt19937& rng, std::size_t n) {
  std::vector<std::int8_t> x(n);
  for (auto& v : x) v = static_cast<std::int8_t>(static_cast<int>(rng() % 3) - 1);
  return x;
}

}  // namespace

TEST_CASE("prediction derives label and uncertainties") {
  const auto p = make_prediction(std::vector<double>(11, 1.0 / 11));
  CHECK(p.label == 0);
  CHECK(p.uncertainty_lc == doctest::Approx(1.0 - 1.0 / 11).epsilon(1e-12));
  CHECK(p.uncertainty_entropy == doctest::Approx(std::log(11.0)).epsilon(1e-12));

  const auto q = make_prediction({0.1, 0.45, 0.45});
  CHECK(q.label == 1);
  const auto r = make_prediction({0.0, 1.0});
  CHECK(r.uncertainty_lc == 0.0);
  CHECK(r.uncertainty_entropy == 0.0);
  CHECK(uncertainty_of(q, UncertaintyMetric::LeastConfidence) == doctest::Approx(0.55));
  CHECK(parse_metric("entropy") == UncertaintyMetric::Entropy);
  CHECK(parse_metric("lc") == UncertaintyMetric::LeastConfidence);
}

TEST_CASE("decision tree on a single class predicts it with certainty") {
  const auto X = matrix_from({{0, 1}, {1, 0}, {1, 1}});
  const std::vector<int> y = {2, 2, 2};
  const auto m = train_decision_tree(X, y, DecisionTreeConfig{});
  CHECK(m.n_classes() == 3);
  const auto p = m.predict(X.row(0));
  CHECK(p.label == 2);
  CHECK(p.proba[2] == 1.0);
}

TEST_CASE("decision tree leaves hold class frequencies") {
  std::vector<std::vector<std::int8_t>> rows(15, std::vector<std::int8_t>{0});
  for (int i = 0; i < 3; ++i) rows[static_cast<std::size_t>(i)][0] = 1;
  std::vector<int> y(15, 1);
  for (int i = 0; i < 3; ++i) y[static_cast<std::size_t>(i)] = 0;
  const auto m = train_decision_tree(matrix_from(rows), y, DecisionTreeConfig{});
  const auto p = m.predict(std::vector<std::int8_t>{1});
  CHECK(p.proba[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(p.proba[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("decision tree separates XOR") {
  const auto d = xor_data(20);
  const auto m = train_decision_tree(d.X, d.y, DecisionTreeConfig{});
  for (std::size_t r = 0; r < d.X.rows(); ++r) CHECK(m.predict(d.X.row(r)).label == d.y[r]);
}

TEST_CASE("decision tree respects min_samples_leaf") {
  const auto d = noisy_data(3, 300, 4);
  DecisionTreeConfig cfg;
  cfg.min_samples_leaf = 15;
  const auto m = train_decision_tree(d.X, d.y, cfg);
  std::map<const double*, int> counts;
  for (std::size_t r = 0; r < d.X.rows(); ++r) ++counts[m.trees()[0].evaluate(d.X.row(r)).data()];
  for (const auto& [leaf, n] : counts) CHECK(n >= 15);
}

TEST_CASE("column restriction limits the features a model reads") {
  const auto d = noisy_data(4, 300, 4);
  const std::vector<std::size_t> cols = {1, 5, 33};
  const auto dt = train_decision_tree(d.X, d.y, DecisionTreeConfig{}, 0, cols);
  BoostedTreesConfig bcfg;
  bcfg.n_rounds = 5;
  const auto gbt = train_boosted_trees(d.X, d.y, bcfg, 0, cols);
  for (const auto* m : {&dt, &gbt}) {
    for (const auto& t : m->trees()) {
      for (const auto& node : t.nodes) {
        if (node.feature >= 0) CHECK((node.feature == 1 || node.feature == 5 || node.feature == 33));
      }
    }
  }
}

TEST_CASE("boosting with zero rounds is uniform") {
  const auto d = xor_data(5);
  BoostedTreesConfig cfg;
  cfg.n_rounds = 0;
  const auto m = train_boosted_trees(d.X, d.y, cfg);
  const auto p = m.predict(d.X.row(0));
  CHECK(p.proba[0] == doctest::Approx(0.5));
  CHECK(p.proba[1] == doctest::Approx(0.5));
}

TEST_CASE("boosting reduces training log-loss every round on separable data") {
  std::vector<std::vector<std::int8_t>> rows;
  std::vector<int> y;
  for (int r = 0; r < 10; ++r) {
    rows.push_back({0, 0});
    y.push_back(0);
    rows.push_back({1, 0});
    y.push_back(1);
    rows.push_back({0, 1});
    y.push_back(2);
    rows.push_back({1, 1});
    y.push_back(2);
  }
  const Toy d{matrix_from(rows), y};
  BoostedTreesConfig cfg;
  cfg.n_rounds = 30;
  BoostedTrainingTrace trace;
  const auto m = train_boosted_trees(d.X, d.y, cfg, 0, {}, &trace);
  REQUIRE(trace.train_logloss.size() == 31);
  for (std::size_t r = 1; r < trace.train_logloss.size(); ++r) {
    CHECK(trace.train_logloss[r] < trace.train_logloss[r - 1]);
  }
  for (std::size_t r = 0; r < d.X.rows(); ++r) CHECK(m.predict(d.X.row(r)).label == d.y[r]);
}

TEST_CASE("boosting is deterministic for a fixed seed") {
  const auto d = noisy_data(9, 200, 3);
  BoostedTreesConfig cfg;
  cfg.n_rounds = 8;
  cfg.seed = 77;
  const auto a = train_boosted_trees(d.X, d.y, cfg);
  const auto b = train_boosted_trees(d.X, d.y, cfg);
  CHECK(model_to_json(a) == model_to_json(b));
}

TEST_CASE("log-loss gradient matches central finite differences") {
  std::mt19937 rng(123);
  std::normal_distribution<double> normal(0.0, 2.0);
  const double eps = 1e-5;
  for (int point = 0; point < 5; ++point) {
    const int k = 2 + point;
    std::vector<double> s(static_cast<std::size_t>(k));
    for (auto& v : s) v = normal(rng);
    const int label = point % k;
    const auto g = logloss_gradient(s, label);
    for (int j = 0; j < k; ++j) {
      auto plus = s;
      auto minus = s;
      plus[static_cast<std::size_t>(j)] += eps;
      minus[static_cast<std::size_t>(j)] -= eps;
      const double fd = (logloss(plus, label) - logloss(minus, label)) / (2 * eps);
      CHECK(std::abs(fd - g[static_cast<std::size_t>(j)]) <= 1e-6);
    }
  }
}

TEST_CASE("predict_proba stays on the simplex") {
  const auto d = noisy_data(5, 400, 5);
  BoostedTreesConfig cfg;
  cfg.n_rounds = 10;
  const auto gbt = train_boosted_trees(d.X, d.y, cfg);
  const auto dt = train_decision_tree(d.X, d.y, DecisionTreeConfig{});
  std::mt19937 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const auto x = random_input(rng, kPacketCells);
    for (const auto* m : {&gbt, &dt}) {
      const auto p = m->predict(x);
      double sum = 0.0;
      for (double v : p.proba) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("inputs are padded with ABSENT and overlong inputs are rejected") {
  const auto d = xor_data(20);
  const auto m = train_decision_tree(d.X, d.y, DecisionTreeConfig{});
  const std::vector<std::int8_t> short_x = {1, 0};
  CHECK(m.predict(short_x).label == 1);
  std::vector<std::int8_t> padded(kPacketCells, kAbsent);
  padded[0] = 1;
  padded[1] = 0;
  CHECK(m.predict(short_x).proba == m.predict(padded).proba);
  const std::vector<std::int8_t> too_long(kPacketCells + 1, 0);
  CHECK_THROWS_AS(m.predict(too_long), ModelError);
}

TEST_CASE("model files round-trip with bit-identical predictions") {
  const auto d = noisy_data(6, 300, 4);
  BoostedTreesConfig cfg;
  cfg.n_rounds = 6;
  const auto gbt = train_boosted_trees(d.X, d.y, cfg);
  const auto dt = train_decision_tree(d.X, d.y, DecisionTreeConfig{});
  std::mt19937 rng(1);
  for (const auto* m : {&gbt, &dt}) {
    const auto path = fs::temp_directory_path() / "flowcascade_test_model.json";
    save_model(*m, path.string());
    const auto back = load_model(path.string());
    CHECK(back.family() == m->family());
    CHECK(back.n_classes() == m->n_classes());
    for (int i = 0; i < 200; ++i) {
      const auto x = random_input(rng, kPacketCells);
      CHECK(back.predict(x).proba == m->predict(x).proba);
    }
    // Truncated file must fail to load.
    const auto text = model_to_json(*m);
    {
      std::ofstream out(path);
      out << text.substr(0, text.size() / 2);
    }
    CHECK_THROWS_AS(load_model(path.string()), ModelError);
    fs::remove(path);
  }
}

TEST_CASE("malformed model documents are rejected") {
  CHECK_THROWS_AS(model_from_json(R"({"format_version": 99})"), ModelError);
  CHECK_THROWS_AS(model_from_json(R"({"format_version": 1, "family": "Forest", "n_classes": 2,
                                     "packet_depth": 1, "trees": []})"),
                  ModelError);
  CHECK_THROWS_AS(model_from_json(R"({"format_version": 1, "family": "DecisionTree", "n_classes": 2,
                                     "packet_depth": 1, "trees": [{"class": -1, "nodes": [
                                       {"feature": 5000, "threshold": 0.5, "left": 1, "right": 2},
                                       {"leaf": [1, 0]}, {"leaf": [0, 1]}]}]})"),
                  ModelError);
}

TEST_CASE("weighted F1 matches a brute-force confusion matrix") {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + trial % 6;
    const std::size_t n = 1 + rng() % 300;
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng() % static_cast<unsigned>(k));
      p[i] = rng() % 3 == 0 ? static_cast<int>(rng() % static_cast<unsigned>(k)) : t[i];
    }
    std::vector<std::vector<double>> cm(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(k)));
    for (std::size_t i = 0; i < n; ++i) cm[static_cast<std::size_t>(t[i])][static_cast<std::size_t>(p[i])] += 1;
    double expected = 0.0;
    for (int c = 0; c < k; ++c) {
      double tp = cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)], row = 0, col = 0;
      for (int j = 0; j < k; ++j) {
        row += cm[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
        col += cm[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      }
      if (row == 0) continue;
      const double prec = col > 0 ? tp / col : 0.0;
      const double rec = tp / row;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      expected += f1 * row / static_cast<double>(n);
    }
    CHECK(std::abs(weighted_f1(t, p, k) - expected) <= 1e-12);
  }
}
