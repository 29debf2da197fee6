#include <doctest.h>

#include <cmath>
#include <numeric>

#include "flowcascade/crafting.hpp"
#include "flowcascade/dataset.hpp"
#include "flowcascade/error.hpp"
#include "support.hpp"

using namespace flowcascade;

namespace {

struct World {
  FlowDataset data;
  DatasetSplit split;
  std::vector<PoolEntry> pool;  // dt-d1, gbt-d1, gbt-d4
};

const World& world() {
  static const World w = [] {
    World s;
    const auto t = make_synthetic_benchmark(fctest::small_synthetic(1200, 31), fctest::temp_dir("cascade"), "w");
    s.data = load_flow_dataset(t.capture, t.labels, 4);
    s.split = split_dataset(s.data.flows.size(), 2);
    PoolConfig pc;
    pc.gbt.n_rounds = 15;
    s.pool.push_back(train_one(s.data, s.split, ModelFamily::DecisionTree, 1, pc));
    s.pool.push_back(train_one(s.data, s.split, ModelFamily::BoostedTrees, 1, pc));
    s.pool.push_back(train_one(s.data, s.split, ModelFamily::BoostedTrees, 4, pc));
    return s;
  }();
  return w;
}

StageSpec stage_of(Stage role, const PoolEntry& e) { return StageSpec{role, e.model, e.mask, no_escalation_policy()}; }

CascadeSpec three_stage() {
  const auto& w = world();
  CascadeSpec spec;
  spec.stages = {stage_of(Stage::Fastest, w.pool[0]), stage_of(Stage::Fast, w.pool[1]),
                 stage_of(Stage::Slow, w.pool[2])};
  return spec;
}

// Independent escalation rule: compare uncertainty against the stored thresholds.
bool escalates(const ThresholdPolicy& p, const Prediction& pred) {
  const double u = p.metric == UncertaintyMetric::LeastConfidence ? 1.0 - *std::max_element(pred.proba.begin(), pred.proba.end())
                                                                   : pred.uncertainty_entropy;
  if (p.kind == PolicyKind::Universal) return u > p.universal_threshold;
  auto it = p.per_class_thresholds.find(pred.label);
  return it != p.per_class_thresholds.end() && u > it->second;
}

}  // namespace

TEST_CASE("cascade structure is validated") {
  const auto& w = world();
  SUBCASE("fast without fastest") {
    CascadeSpec s;
    s.stages = {stage_of(Stage::Fast, w.pool[1]), stage_of(Stage::Slow, w.pool[2])};
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("out of order") {
    CascadeSpec s;
    s.stages = {stage_of(Stage::Fast, w.pool[1]), stage_of(Stage::Fastest, w.pool[0])};
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("multi-packet model in a first-packet stage") {
    CascadeSpec s;
    s.stages = {stage_of(Stage::Fastest, w.pool[2])};
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("class count mismatch") {
    CascadeSpec s;
    s.stages = {stage_of(Stage::Fastest, w.pool[0]),
                StageSpec{Stage::Slow, fctest::chain_model(2, {0}, {{0.5, 0.5}, {0.5, 0.5}}), std::nullopt,
                          no_escalation_policy()}};
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("mask width mismatch") {
    CascadeSpec s = three_stage();
    s.stages[0].mask = w.pool[2].mask;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("oracle cannot be served") {
    CascadeSpec s = three_stage();
    s.stages[0].policy.kind = PolicyKind::Oracle;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("valid shapes") {
    CHECK_NOTHROW(three_stage().validate());
    CascadeSpec lone;
    lone.stages = {stage_of(Stage::Slow, w.pool[2])};
    CHECK_NOTHROW(lone.validate());
    CHECK(lone.n_slow_packets() == 4);
    CascadeSpec one;
    one.stages = {stage_of(Stage::Fastest, w.pool[0])};
    CHECK(one.n_slow_packets() == 1);
  }
}

TEST_CASE("calibration sets each edge with the family default and offline replay follows the thresholds") {
  const auto& w = world();
  CascadeSpec spec = three_stage();
  CalibrationConfig cfg;
  const auto edges = calibrate_cascade(spec, w.data, w.split.validation, cfg);
  REQUIRE(edges.size() == 2);
  CHECK(edges[0].from == Stage::Fastest);
  CHECK(edges[0].kind == PolicyKind::Universal);
  CHECK(edges[1].from == Stage::Fast);
  CHECK(edges[1].kind == PolicyKind::PerClass);
  CHECK(spec.stages[0].policy.kind == PolicyKind::Universal);
  CHECK(spec.stages[1].policy.kind == PolicyKind::PerClass);

  const auto& idx = w.split.test;
  const auto result = offline_cascade(spec, w.data, idx);
  std::vector<std::vector<Prediction>> preds;
  for (const auto& st : spec.stages) preds.push_back(predict_flows(*st.model, w.data, idx));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    DecidedBy by = DecidedBy::Fastest;
    int label = preds[0][j].label;
    if (escalates(spec.stages[0].policy, preds[0][j])) {
      by = DecidedBy::Fast;
      label = preds[1][j].label;
      if (escalates(spec.stages[1].policy, preds[1][j])) {
        by = DecidedBy::Slow;
        label = preds[2][j].label;
      }
    }
    CHECK(result.decided_by[j] == by);
    CHECK(result.labels[j] == label);
  }
  const auto fastest_only = weighted_f1(w.data.labels(idx),
                                        [&] {
                                          std::vector<int> v;
                                          for (const auto& p : preds[0]) v.push_back(p.label);
                                          return v;
                                        }(),
                                        w.data.n_classes);
  CHECK(result.f1 > fastest_only);
}

TEST_CASE("auto policy keeps whichever kind escalates less at the knee") {
  const auto& w = world();
  auto run = [&](std::optional<PolicyKind> kind, bool automatic) {
    CascadeSpec spec;
    spec.stages = {stage_of(Stage::Fastest, w.pool[0]), stage_of(Stage::Slow, w.pool[2])};
    CalibrationConfig cfg;
    cfg.fastest_kind = kind;
    cfg.fastest_auto = automatic;
    return calibrate_cascade(spec, w.data, w.split.validation, cfg).front();
  };
  const auto uni = run(PolicyKind::Universal, false);
  const auto pc = run(PolicyKind::PerClass, false);
  const auto picked = run(std::nullopt, true);
  CHECK((picked.kind == PolicyKind::Universal || picked.kind == PolicyKind::PerClass));
  const auto& same = picked.kind == PolicyKind::Universal ? uni : pc;
  const auto& other = picked.kind == PolicyKind::Universal ? pc : uni;
  CHECK(picked.choice.policy.portion == same.choice.policy.portion);
  CHECK(picked.choice.f1 == same.choice.f1);
  const double best = std::max(uni.choice.f1, pc.choice.f1);
  CHECK(picked.choice.f1 >= best - 0.002);
  // The loser either escalates more or falls outside the tolerance.
  CHECK((other.choice.f1 < best - 0.002 || other.choice.policy.portion >= picked.choice.policy.portion));
}

TEST_CASE("target portion mode escalates about the requested share on the calibration flows") {
  const auto& w = world();
  CascadeSpec spec;
  spec.stages = {stage_of(Stage::Fastest, w.pool[0]), stage_of(Stage::Slow, w.pool[2])};
  CalibrationConfig cfg;
  cfg.mode = SelectionMode::TargetPortion;
  cfg.target = 0.25;
  calibrate_cascade(spec, w.data, w.split.validation, cfg);
  const auto r = offline_cascade(spec, w.data, w.split.validation);
  const auto slow = std::count(r.decided_by.begin(), r.decided_by.end(), DecidedBy::Slow);
  const double portion = static_cast<double>(slow) / static_cast<double>(r.decided_by.size());
  // Trees produce tied uncertainties, so the realized share can only move in steps.
  CHECK(portion <= 0.25 + 1e-9);
  CHECK(std::fabs(spec.stages[0].policy.portion - portion) < 1e-9);
}

TEST_CASE("an unreachable F1 target names the best reachable value") {
  const auto& w = world();
  CascadeSpec spec;
  spec.stages = {stage_of(Stage::Fastest, w.pool[0]), stage_of(Stage::Slow, w.pool[2])};
  CalibrationConfig cfg;
  cfg.mode = SelectionMode::TargetF1;
  cfg.target = 1.01;
  try {
    calibrate_cascade(spec, w.data, w.split.validation, cfg);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("best") != std::string::npos);
  }
}

TEST_CASE("a saved cascade loads back with identical behaviour") {
  const auto& w = world();
  CascadeSpec spec = three_stage();
  calibrate_cascade(spec, w.data, w.split.validation, CalibrationConfig{});
  const auto dir = fctest::temp_dir("cascade_saved");
  save_cascade(spec, dir);
  const auto back = load_cascade(dir + "/cascade.json");
  REQUIRE(back.stages.size() == 3);
  const auto a = offline_cascade(spec, w.data, w.split.test);
  const auto b = offline_cascade(back, w.data, w.split.test);
  CHECK(a.labels == b.labels);
  CHECK(a.decided_by == b.decided_by);
  CHECK(back.n_slow_packets() == 4);
  CHECK_THROWS_AS(load_cascade(dir + "/nope.json"), ValidationError);
}

TEST_CASE("placement over a trained pool builds a valid cascade") {
  const auto& w = world();
  std::vector<ModelProfile> profiles;
  for (const auto& e : w.pool) profiles.push_back(e.profile);
  const auto pl = place_models(pareto_front(profiles), profiles, PlacementConfig{});
  const auto spec = cascade_from_placement(pl, w.pool);
  CHECK_NOTHROW(spec.validate());
  CHECK(!spec.stages.empty());
}
