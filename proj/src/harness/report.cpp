#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "flowcascade/error.hpp"
#include "flowcascade/harness.hpp"

namespace flowcascade {

namespace {

double nearest_rank(const std::vector<double>& sorted, double q) {
  const auto n = sorted.size();
  const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  return sorted[std::min(n - 1, i == 0 ? 0 : i - 1)];
}

double median_of(std::vector<double> v) { return summarize_latency(std::move(v)).p50_us; }

nlohmann::ordered_json latency_json(const LatencySummary& l) {
  return {{"count", l.count}, {"p50_us", l.p50_us}, {"p90_us", l.p90_us}, {"p99_us", l.p99_us}, {"mean_us", l.mean_us}};
}

}  // namespace

LatencySummary summarize_latency(std::vector<double> values) {
  LatencySummary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.p50_us = nearest_rank(values, 0.5);
  s.p90_us = nearest_rank(values, 0.9);
  s.p99_us = nearest_rank(values, 0.99);
  s.mean_us = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return s;
}

RunReport score(std::span<const FlowOutcome> outcomes, const std::map<FlowKey, int>& labels) {
  RunReport r;
  r.admitted = outcomes.size();
  std::vector<double> e2e;
  struct Parts {
    std::vector<double> collection, queueing, featurization, inference, e2e;
  };
  std::map<DecidedBy, Parts> parts;
  std::vector<int> truth, predicted;
  std::int64_t t_begin = INT64_MAX, t_end = INT64_MIN;

  for (const auto& o : outcomes) {
    ++r.decided_by[o.decided_by];
    if (o.decided_by == DecidedBy::Dropped) {
      ++r.dropped;
      continue;
    }
    ++r.decided;
    const double lat = static_cast<double>(o.t_decision_us - o.t_first_packet_us);
    e2e.push_back(lat);
    t_begin = std::min(t_begin, o.t_first_packet_us);
    t_end = std::max(t_end, o.t_decision_us);

    const auto& t = o.times;
    Parts& p = parts[o.decided_by];
    p.e2e.push_back(lat);
    p.collection.push_back(t.collected_us >= 0 ? static_cast<double>(t.collected_us - o.t_first_packet_us) : 0.0);
    double q = 0.0;
    if (t.q1_enqueue_us >= 0 && t.q1_dequeue_us >= 0) q += static_cast<double>(t.q1_dequeue_us - t.q1_enqueue_us);
    if (t.collected_us >= 0 && t.slow_dequeue_us >= 0) q += static_cast<double>(t.slow_dequeue_us - t.collected_us);
    p.queueing.push_back(q);
    p.featurization.push_back(static_cast<double>(t.featurize_ns) / 1000.0);
    p.inference.push_back(static_cast<double>(t.inference_ns) / 1000.0);

    if (auto it = labels.find(o.key); it != labels.end()) {
      truth.push_back(it->second);
      predicted.push_back(o.label);
    }
  }

  r.latency = summarize_latency(e2e);
  for (auto& [by, p] : parts) {
    StageBreakdown b;
    b.collection_us = median_of(std::move(p.collection));
    b.queueing_us = median_of(std::move(p.queueing));
    b.featurization_us = median_of(std::move(p.featurization));
    b.inference_us = median_of(std::move(p.inference));
    b.e2e = summarize_latency(std::move(p.e2e));
    r.breakdown[by] = b;
  }
  if (r.decided > 0 && t_end > t_begin) {
    r.service_rate = static_cast<double>(r.decided) / (static_cast<double>(t_end - t_begin) / 1e6);
  }
  r.miss_rate = r.admitted == 0 ? 0.0 : static_cast<double>(r.dropped) / static_cast<double>(r.admitted);
  r.scored = truth.size();
  if (!truth.empty()) {
    int n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) n = std::max({n, truth[i] + 1, predicted[i] + 1});
    r.f1_weighted = weighted_f1(truth, predicted, n);
  }
  return r;
}

double trapezoid_area(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("trapezoid: x and y differ in length");
  double a = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) a += (x[i] - x[i - 1]) * (y[i] + y[i - 1]) / 2.0;
  return a;
}

AssignmentSweep sweep_assignment(std::span<const CalibrationRecord> records, int n_classes,
                                 std::span<const PolicyKind> kinds, std::span<const double> portions,
                                 UncertaintyMetric metric, std::span<const double> grid, std::uint64_t seed) {
  if (records.empty()) throw ValidationError("sweep_assignment: no calibration records");
  AssignmentSweep out;
  std::vector<int> truth, base;
  for (const auto& r : records) {
    truth.push_back(r.truth);
    base.push_back(r.upstream.label);
  }
  out.base_f1 = weighted_f1(truth, base, n_classes);

  std::vector<PolicyKind> all(kinds.begin(), kinds.end());
  if (std::find(all.begin(), all.end(), PolicyKind::Oracle) == all.end()) all.push_back(PolicyKind::Oracle);

  std::vector<double> areas;
  for (PolicyKind kind : all) {
    PolicySweep ps;
    ps.kind = kind;
    ps.curve = policy_curve(kind, records, portions, n_classes, metric, grid, seed);
    auto pts = ps.curve;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const CurvePoint& a, const CurvePoint& b) { return a.portion < b.portion; });
    std::vector<double> x, y;
    for (const auto& p : pts) {
      x.push_back(p.portion);
      y.push_back(p.f1 - out.base_f1);
    }
    areas.push_back(trapezoid_area(x, y));
    out.policies.push_back(std::move(ps));
  }
  const auto oracle = static_cast<std::size_t>(
      std::find(all.begin(), all.end(), PolicyKind::Oracle) - all.begin());
  const double oracle_area = areas[oracle];
  for (std::size_t i = 0; i < out.policies.size(); ++i) {
    if (oracle_area > 0.0) out.policies[i].normalized_auc = areas[i] / oracle_area;
  }
  return out;
}

std::string report_to_json(const RunReport& r, const std::string& extra_json) {
  nlohmann::ordered_json j;
  j["admitted"] = r.admitted;
  j["decided"] = r.decided;
  j["dropped"] = r.dropped;
  j["service_rate"] = r.service_rate;
  j["miss_rate"] = r.miss_rate;
  j["f1_weighted"] = r.f1_weighted ? nlohmann::ordered_json(*r.f1_weighted) : nlohmann::ordered_json(nullptr);
  j["scored_flows"] = r.scored;
  j["latency"] = latency_json(r.latency);
  nlohmann::ordered_json hist = nlohmann::ordered_json::object();
  for (const auto& [by, n] : r.decided_by) hist[std::string(decided_by_name(by))] = n;
  j["decided_by"] = hist;
  nlohmann::ordered_json br = nlohmann::ordered_json::object();
  for (const auto& [by, b] : r.breakdown) {
    br[std::string(decided_by_name(by))] = {{"collection_us", b.collection_us},
                                            {"queueing_us", b.queueing_us},
                                            {"featurization_us", b.featurization_us},
                                            {"inference_us", b.inference_us},
                                            {"e2e", latency_json(b.e2e)}};
  }
  j["breakdown"] = br;
  if (r.pacing) {
    j["pacing"] = {{"frames", r.pacing->frames},
                   {"p50_drift_us", r.pacing->p50_drift_us},
                   {"p99_drift_us", r.pacing->p99_drift_us},
                   {"max_drift_us", r.pacing->max_drift_us},
                   {"unreliable", r.pacing->unreliable},
                   {"wall_s", r.pacing->wall_s}};
  }
  if (!r.config_hash.empty()) j["config_hash"] = r.config_hash;
  if (!extra_json.empty()) j["extra"] = nlohmann::ordered_json::parse(extra_json);
  return j.dump(2);
}

void write_sweep_csv(const std::string& path, const AssignmentSweep& sweep) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write sweep CSV '" + path + "'");
  out << "policy,target,portion,captured_incorrect,f1,normalized_auc\n";
  for (const auto& p : sweep.policies) {
    for (const auto& c : p.curve) {
      out << policy_kind_name(p.kind) << ',' << c.target << ',' << c.portion << ',' << c.captured_incorrect << ','
          << c.f1 << ',';
      if (p.normalized_auc) out << *p.normalized_auc;
      out << '\n';
    }
  }
}

}  // namespace flowcascade
