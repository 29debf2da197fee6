#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcascade/assignment.hpp"
#include "flowcascade/flow_state.hpp"
#include "flowcascade/packet_codec.hpp"
#include "flowcascade/pipeline.hpp"

namespace flowcascade {

// A capture plus its sidecar labels.
struct LabeledTrace {
  std::string capture;
  std::string labels;
  std::vector<std::string> class_names;
};

struct SyntheticConfig {
  std::uint64_t seed = 1;
  std::size_t n_flows = 20000;
  int n_classes = 8;
  double difficulty = 0.3;      // fraction of flows without a first-packet signature
  double flow_rate = 2000.0;    // new flows per second (Poisson)
  int min_packets = 12;
  int max_packets = 20;
  double gap_scale_us = 8000.0;  // Pareto x_m of packet inter-arrival
  double gap_shape = 1.5;        // Pareto alpha
  double gap_cap_us = 2'000'000.0;
  double hard_hint = 0.5;     // chance a hard flow still carries a weak first-packet hint
  double later_reveal = 0.35;  // chance each later packet carries the class size band
};

// Writes <dir>/<name>.pcap and <dir>/<name>.labels.csv. Same config, same
// bytes.
LabeledTrace make_synthetic_benchmark(const SyntheticConfig& cfg, const std::string& dir,
                                      const std::string& name = "synthetic");

struct ReplayFrame {
  std::vector<std::uint8_t> bytes;
  std::int64_t offset_us = 0;  // from the first frame
};

struct ReplaySchedule {
  LinkType link = LinkType::Ethernet;
  std::vector<ReplayFrame> frames;      // ordered by offset
  std::map<FlowKey, int> labels;        // includes replicated flows
  std::size_t n_flows = 0;              // distinct flow keys scheduled
  double native_flow_rate = 0.0;        // new flows per second in the capture
  double duration_s = 0.0;
};

struct ReplayOptions {
  double target_rate = 0.0;     // new flows per second; 0 keeps the capture's rate
  double max_duration_s = 0.0;  // only flows starting before this; 0 keeps all
  std::uint64_t seed = 0;
};

// Loads a capture into a replay schedule. With a target rate above the
// native one, flows are copied with rewritten source addresses and start
// times shifted between the originals; per-flow timing is untouched.
ReplaySchedule build_schedule(const std::string& pcap_path, const std::map<FlowKey, int>* labels,
                              const ReplayOptions& opts);

struct PacingStats {
  std::size_t frames = 0;
  double p50_drift_us = 0.0;
  double p99_drift_us = 0.0;
  double max_drift_us = 0.0;
  bool unreliable = false;  // p99 drift above 1 ms
  double wall_s = 0.0;
};

using FrameSink = std::function<void(std::span<const std::uint8_t>, LinkType, std::int64_t now_us)>;

// Delivers frames at their offsets divided by speed, passing the scheduled
// arrival time (monotonic us) to the sink. speed <= 0 or infinite replays
// as fast as possible and passes the delivery time.
PacingStats replay(const ReplaySchedule& schedule, double speed, const FrameSink& sink);

struct ReplayRun {
  std::vector<FlowOutcome> outcomes;
  PacingStats pacing;
  FlowStateCounters counters;
  std::uint64_t skipped_frames = 0;
};

// Replays a schedule into a fresh server and waits for every flow to
// resolve. As-fast-as-possible replays make the producer block on a full
// q1 instead of dropping.
ReplayRun replay_into(const CascadeSpec& spec, const ReplaySchedule& schedule, double speed, ServeConfig cfg);

struct LatencySummary {
  double p50_us = 0.0;
  double p90_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  std::size_t count = 0;
};

// Medians over flows decided by one category.
struct StageBreakdown {
  double collection_us = 0.0;
  double queueing_us = 0.0;
  double featurization_us = 0.0;
  double inference_us = 0.0;
  LatencySummary e2e;
};

struct RunReport {
  std::size_t admitted = 0;
  std::size_t decided = 0;
  std::size_t dropped = 0;
  double service_rate = 0.0;  // decided flows per second
  LatencySummary latency;
  std::map<DecidedBy, StageBreakdown> breakdown;
  std::map<DecidedBy, std::size_t> decided_by;
  double miss_rate = 0.0;
  std::optional<double> f1_weighted;  // absent without labeled decisions
  std::size_t scored = 0;
  std::optional<PacingStats> pacing;
  std::string config_hash;
};

// Quantiles use the nearest-rank rule.
LatencySummary summarize_latency(std::vector<double> values);

RunReport score(std::span<const FlowOutcome> outcomes, const std::map<FlowKey, int>& labels);

struct PolicySweep {
  PolicyKind kind = PolicyKind::Universal;
  std::vector<CurvePoint> curve;
  std::optional<double> normalized_auc;
};

struct AssignmentSweep {
  double base_f1 = 0.0;  // nothing escalated
  std::vector<PolicySweep> policies;
};

// Curves per policy style over the portions, and the area of (F1 - base)
// over realized portion relative to Oracle's. Oracle is always evaluated.
AssignmentSweep sweep_assignment(std::span<const CalibrationRecord> records, int n_classes,
                                 std::span<const PolicyKind> kinds, std::span<const double> portions,
                                 UncertaintyMetric metric, std::span<const double> grid, std::uint64_t seed = 0);

double trapezoid_area(std::span<const double> x, std::span<const double> y);

std::string report_to_json(const RunReport& report, const std::string& extra_json = "");
void write_sweep_csv(const std::string& path, const AssignmentSweep& sweep);

}  // namespace flowcascade
