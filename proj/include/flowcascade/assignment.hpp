#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcascade/models.hpp"
#include "flowcascade/packet_codec.hpp"
#include "flowcascade/prediction.hpp"

namespace flowcascade {

struct ValidationPoint {
  double uncertainty = 0.0;
  int predicted_class = 0;
  bool correct = false;
};

enum class PolicyKind { Universal, PerClass, Random, Oracle };

std::string_view policy_kind_name(PolicyKind kind);
PolicyKind parse_policy_kind(std::string_view name);

// Escalation rule for one cascade edge. Escalation is strict: a request
// moves on when its uncertainty is greater than the threshold. A threshold
// below zero escalates everything, since uncertainties are non-negative.
struct ThresholdPolicy {
  PolicyKind kind = PolicyKind::Universal;
  UncertaintyMetric metric = UncertaintyMetric::LeastConfidence;
  double universal_threshold = 0.0;
  std::map<int, double> per_class_thresholds;  // classes never predicted in calibration do not escalate
  double portion = 0.0;                        // realized portion on the calibration set
  std::uint64_t seed = 0;                      // Random
  bool saturated = false;                      // requested portion was beyond reach

  // key identifies the request for Random; Oracle needs truth and throws.
  bool escalate(const Prediction& p, const FlowKey& key) const;
  bool escalate(double uncertainty, int predicted_class) const;
};

// Never escalates.
ThresholdPolicy no_escalation_policy();

std::string policy_to_json(const ThresholdPolicy& policy);
ThresholdPolicy policy_from_json(std::string_view text);
void save_policy(const ThresholdPolicy& policy, const std::string& path);
ThresholdPolicy load_policy(const std::string& path);

// 0.01, 0.02, ..., 0.99 for step 0.01.
std::vector<double> quantile_grid(double step = 0.01);

// Threshold at quantile q of the ascending sorted scores:
// sorted[min(ceil(q*n), n) - 1]; q <= 0 yields -1 (escalate all).
double quantile_threshold(std::span<const double> sorted, double q);

struct QuantileThreshold {
  double quantile;
  double threshold;
};

std::vector<QuantileThreshold> universal_thresholds(std::span<const ValidationPoint> points,
                                                    std::span<const double> grid);

// Universal policy escalating about `portion` of the points.
ThresholdPolicy universal_policy(std::span<const ValidationPoint> points, double portion,
                                 UncertaintyMetric metric = UncertaintyMetric::LeastConfidence);

struct SlopeRecord {
  int cls = 0;
  double threshold = 0.0;
  std::size_t delta_incorrect = 0;
  std::size_t delta_total = 0;
  double slope = 0.0;
  std::size_t step = 0;  // position in the class's high-to-low walk
};

// All per-class threshold increments, sorted by slope (descending; ties by
// higher threshold, then class, then walk position).
std::vector<SlopeRecord> per_class_slope(std::span<const ValidationPoint> points, std::span<const double> grid);

// Greedy per-class thresholds. Increments of one class are applied in walk
// order; each class offers the run of increments from its current position
// with the best average slope, and the steepest offer goes first.
ThresholdPolicy per_class_thresholds(std::span<const ValidationPoint> points, double target_portion,
                                     std::span<const double> grid,
                                     UncertaintyMetric metric = UncertaintyMetric::LeastConfidence);

// One policy per target portion, sharing a single greedy pass.
std::vector<ThresholdPolicy> per_class_policies(std::span<const ValidationPoint> points,
                                                std::span<const double> targets, std::span<const double> grid,
                                                UncertaintyMetric metric = UncertaintyMetric::LeastConfidence);

ThresholdPolicy random_policy(double portion, std::uint64_t seed);
// Evaluation only: escalates exactly the incorrect points.
ThresholdPolicy oracle_policy(std::span<const ValidationPoint> points);

// Upstream family decides the default threshold style for its edge.
PolicyKind default_policy_kind(ModelFamily upstream);

// Everything needed to replay an escalation decision offline.
struct CalibrationRecord {
  Prediction upstream;
  int downstream_label = 0;
  int truth = 0;
  FlowKey key;
};

std::vector<ValidationPoint> validation_points(std::span<const CalibrationRecord> records,
                                               UncertaintyMetric metric);

struct CurvePoint {
  double target = 0.0;    // requested portion
  double portion = 0.0;   // realized escalated fraction
  double captured_incorrect = 0.0;
  double f1 = 0.0;
};

// 0, grid..., 1.
std::vector<double> portion_sweep(double step = 0.01);

// Escalation masks per policy style at each target portion.
std::vector<std::vector<bool>> escalation_masks(PolicyKind kind, std::span<const CalibrationRecord> records,
                                                std::span<const double> targets, UncertaintyMetric metric,
                                                std::span<const double> grid, std::uint64_t seed = 0);

std::vector<CurvePoint> policy_curve(PolicyKind kind, std::span<const CalibrationRecord> records,
                                     std::span<const double> targets, int n_classes, UncertaintyMetric metric,
                                     std::span<const double> grid, std::uint64_t seed = 0);

// The policy of a given style that escalates about `portion`.
ThresholdPolicy make_policy(PolicyKind kind, std::span<const CalibrationRecord> records, double portion,
                            UncertaintyMetric metric, std::span<const double> grid, std::uint64_t seed = 0);

enum class SelectionMode { ParetoKnee, TargetPortion, TargetF1 };

std::string_view selection_mode_name(SelectionMode mode);
SelectionMode parse_selection_mode(std::string_view name);

struct PolicyChoice {
  ThresholdPolicy policy;
  std::vector<CurvePoint> curve;
  double f1 = 0.0;
};

// ParetoKnee: smallest portion within knee_tolerance of the best F1.
// TargetPortion: policy at `target`. TargetF1: smallest portion reaching
// `target`, ValidationError naming the best reachable F1 otherwise.
PolicyChoice choose_policy(PolicyKind kind, std::span<const CalibrationRecord> records, int n_classes,
                           SelectionMode mode, double target, UncertaintyMetric metric,
                           std::span<const double> grid, double knee_tolerance = 0.002, std::uint64_t seed = 0);

}  // namespace flowcascade
