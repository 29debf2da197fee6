#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcascade/assignment.hpp"
#include "flowcascade/cascade.hpp"
#include "flowcascade/dataset.hpp"
#include "flowcascade/feature_mask.hpp"
#include "flowcascade/models.hpp"

namespace flowcascade {

struct ModelProfile {
  std::string model_id;  // e.g. "gbt-d3"
  ModelFamily family = ModelFamily::DecisionTree;
  int packet_depth = 1;
  double f1 = 0.0;                // weighted, validation split
  double inference_us = 0.0;      // median over timed predictions
  double featurization_us = 0.0;  // median decode time per packet * depth
  double collection_us = 0.0;     // median wait for `depth` packets
  double e2e_us = 0.0;            // sum of the three above
  bool failed = false;
  std::string error;
};

std::string profile_id(ModelFamily family, int depth);

struct PoolEntry {
  ModelProfile profile;
  std::shared_ptr<const ClassifierModel> model;
  FeatureMask mask;
};

struct PoolConfig {
  DecisionTreeConfig dt;
  BoostedTreesConfig gbt;
  int timing_predictions = 1000;
  bool operator==(const PoolConfig&) const = default;
};

// One model per (family, depth), trained on split.train and profiled on
// split.validation. A failed training is recorded in its profile.
std::vector<PoolEntry> train_pool(const FlowDataset& data, const DatasetSplit& split,
                                  std::span<const ModelFamily> families, std::span<const int> depths,
                                  const PoolConfig& cfg);

PoolEntry train_one(const FlowDataset& data, const DatasetSplit& split, ModelFamily family, int depth,
                    const PoolConfig& cfg);

ModelProfile profile_model(const ClassifierModel& model, const FlowDataset& data,
                           std::span<const std::size_t> validation, int timing_predictions);

// Profiles not dominated in (higher f1, lower e2e latency), sorted by
// latency ascending. Failed profiles are ignored.
std::vector<ModelProfile> pareto_front(std::span<const ModelProfile> profiles);
bool dominates(const ModelProfile& a, const ModelProfile& b);

struct PlacementConfig {
  double f1_floor = 0.8;
  double slow_gain_per_packet = 0.002;
  double min_f1_gap = 0.005;
  double min_latency_ratio = 1.5;
  bool operator==(const PlacementConfig&) const = default;
};

// Indices into the full profile list.
struct Placement {
  std::optional<std::size_t> fastest;
  std::optional<std::size_t> fast;
  std::optional<std::size_t> slow;
  std::vector<std::string> warnings;
};

Placement place_models(std::span<const ModelProfile> front, std::span<const ModelProfile> profiles,
                       const PlacementConfig& cfg);

// Predictions of a model over flows, reading the model's packet depth.
std::vector<Prediction> predict_flows(const ClassifierModel& model, const FlowDataset& data,
                                      std::span<const std::size_t> idx);

struct CalibrationConfig {
  UncertaintyMetric metric = UncertaintyMetric::LeastConfidence;
  double grid_step = 0.01;
  SelectionMode mode = SelectionMode::ParetoKnee;
  double target = 0.0;
  double knee_tolerance = 0.002;
  std::optional<PolicyKind> fastest_kind;  // default follows the upstream family
  std::optional<PolicyKind> fast_kind;
  // Calibrate both Universal and PerClass and keep the one that escalates
  // less for the same F1. Overrides the kind above.
  bool fastest_auto = false;
  bool fast_auto = false;
  std::uint64_t seed = 0;
  bool operator==(const CalibrationConfig&) const = default;
};

struct EdgeCalibration {
  Stage from = Stage::Fastest;
  PolicyKind kind = PolicyKind::Universal;
  PolicyChoice choice;
  std::vector<CalibrationRecord> records;  // what the edge was calibrated on
};

// Sets every non-final stage's policy, last edge first, so each edge is
// calibrated against the cascade that follows it.
std::vector<EdgeCalibration> calibrate_cascade(CascadeSpec& spec, const FlowDataset& data,
                                               std::span<const std::size_t> idx, const CalibrationConfig& cfg);

// Offline replay of a cascade over labeled flows: final label and the
// deciding stage per flow, assuming every slow request gets its packets.
struct OfflineResult {
  std::vector<int> labels;
  std::vector<DecidedBy> decided_by;
  double f1 = 0.0;
};

// preds[s] holds stage s's predictions for every flow.
OfflineResult offline_cascade(const CascadeSpec& spec, const std::vector<std::vector<Prediction>>& preds,
                              const FlowDataset& data, std::span<const std::size_t> idx);
OfflineResult offline_cascade(const CascadeSpec& spec, const FlowDataset& data, std::span<const std::size_t> idx);

// Cascade from a placement over a trained pool (policies still default).
CascadeSpec cascade_from_placement(const Placement& placement, std::span<const PoolEntry> pool);

void write_profiles_csv(const std::string& path, std::span<const ModelProfile> profiles);

}  // namespace flowcascade
