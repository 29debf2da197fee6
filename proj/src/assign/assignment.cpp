#include "flowcascade/assignment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

constexpr std::array<std::string_view, 4> kKindNames = {"Universal", "PerClass", "Random", "Oracle"};
constexpr std::array<std::string_view, 3> kModeNames = {"pareto_knee", "target_portion", "target_f1"};

std::uint64_t mix64(std::uint64_t h) {
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0); }

std::vector<double> sorted_uncertainties(std::span<const ValidationPoint> points) {
  std::vector<double> u;
  u.reserve(points.size());
  for (const auto& p : points) u.push_back(p.uncertainty);
  std::sort(u.begin(), u.end());
  return u;
}

// Per-class points sorted by uncertainty, with a running count of
// incorrect ones, for interval queries.
struct ClassColumn {
  int cls = 0;
  std::vector<double> u;
  std::vector<std::size_t> incorrect_prefix;  // incorrect among the first i

  std::size_t count_le(double x) const {
    return static_cast<std::size_t>(std::upper_bound(u.begin(), u.end(), x) - u.begin());
  }
};

std::vector<ClassColumn> class_columns(std::span<const ValidationPoint> points) {
  std::map<int, std::vector<std::pair<double, bool>>> by_class;
  for (const auto& p : points) by_class[p.predicted_class].emplace_back(p.uncertainty, p.correct);
  std::vector<ClassColumn> cols;
  for (auto& [cls, v] : by_class) {
    std::sort(v.begin(), v.end());
    ClassColumn c;
    c.cls = cls;
    c.incorrect_prefix.push_back(0);
    for (const auto& [u, ok] : v) {
      c.u.push_back(u);
      c.incorrect_prefix.push_back(c.incorrect_prefix.back() + (ok ? 0 : 1));
    }
    cols.push_back(std::move(c));
  }
  return cols;
}

// The high-to-low walk of one class: grid quantiles from the top, then a
// final step that escalates the rest of the class.
std::vector<SlopeRecord> class_walk(const ClassColumn& c, std::span<const double> grid) {
  std::vector<SlopeRecord> out;
  std::vector<double> thresholds;
  if (c.u.size() >= 2) {
    std::vector<double> desc(grid.begin(), grid.end());
    std::sort(desc.begin(), desc.end(), std::greater<>());
    for (double q : desc) thresholds.push_back(quantile_threshold(c.u, q));
  }
  thresholds.push_back(-1.0);
  std::size_t above_prev = c.u.size();  // points with u <= previous threshold
  for (double thr : thresholds) {
    const std::size_t le = c.count_le(thr);
    SlopeRecord r;
    r.cls = c.cls;
    r.threshold = thr;
    r.delta_total = above_prev - le;
    r.delta_incorrect = c.incorrect_prefix[above_prev] - c.incorrect_prefix[le];
    r.slope = r.delta_total > 0 ? static_cast<double>(r.delta_incorrect) / static_cast<double>(r.delta_total) : 0.0;
    r.step = out.size();
    out.push_back(r);
    above_prev = le;
  }
  return out;
}

// Equal slopes: the more uncertain increment first, so a flat step deep in
// one class never jumps ahead of a flat step near the top of another.
bool steeper(const SlopeRecord& a, const SlopeRecord& b) {
  if (a.slope != b.slope) return a.slope > b.slope;
  if (a.threshold != b.threshold) return a.threshold > b.threshold;
  if (a.cls != b.cls) return a.cls < b.cls;
  return a.step < b.step;
}

std::vector<int> final_labels(std::span<const CalibrationRecord> records, const std::vector<bool>& mask) {
  std::vector<int> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels[i] = mask[i] ? records[i].downstream_label : records[i].upstream.label;
  }
  return labels;
}

}  // namespace

std::string_view policy_kind_name(PolicyKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

PolicyKind parse_policy_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<PolicyKind>(i);
  }
  if (name == "universal") return PolicyKind::Universal;
  if (name == "per_class") return PolicyKind::PerClass;
  if (name == "random") return PolicyKind::Random;
  if (name == "oracle") return PolicyKind::Oracle;
  throw ValidationError("unknown policy kind '" + std::string(name) + "'");
}

std::string_view selection_mode_name(SelectionMode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

SelectionMode parse_selection_mode(std::string_view name) {
  for (std::size_t i = 0; i < kModeNames.size(); ++i) {
    if (kModeNames[i] == name) return static_cast<SelectionMode>(i);
  }
  throw ValidationError("unknown selection mode '" + std::string(name) + "'");
}

bool ThresholdPolicy::escalate(double uncertainty, int predicted_class) const {
  switch (kind) {
    case PolicyKind::Universal:
      return uncertainty > universal_threshold;
    case PolicyKind::PerClass: {
      auto it = per_class_thresholds.find(predicted_class);
      return it != per_class_thresholds.end() && uncertainty > it->second;
    }
    case PolicyKind::Random:
    case PolicyKind::Oracle:
      break;
  }
  throw ValidationError(std::string(policy_kind_name(kind)) + " policy cannot decide from an uncertainty alone");
}

bool ThresholdPolicy::escalate(const Prediction& p, const FlowKey& key) const {
  if (kind == PolicyKind::Random) {
    const std::uint64_t h = mix64(FlowKeyHash{}(key) ^ mix64(seed));
    return unit_from_hash(h) < portion;
  }
  if (kind == PolicyKind::Oracle) {
    throw ValidationError("the Oracle policy needs ground truth and is for evaluation only");
  }
  return escalate(uncertainty_of(p, metric), p.label);
}

ThresholdPolicy no_escalation_policy() {
  ThresholdPolicy p;
  p.kind = PolicyKind::Universal;
  p.universal_threshold = std::numeric_limits<double>::max();
  return p;
}

std::string policy_to_json(const ThresholdPolicy& policy) {
  nlohmann::ordered_json j;
  j["kind"] = policy_kind_name(policy.kind);
  j["metric"] = metric_name(policy.metric);
  switch (policy.kind) {
    case PolicyKind::Universal:
      j["thresholds"] = policy.universal_threshold;
      break;
    case PolicyKind::PerClass: {
      nlohmann::ordered_json t = nlohmann::ordered_json::object();
      for (const auto& [cls, thr] : policy.per_class_thresholds) t[std::to_string(cls)] = thr;
      j["thresholds"] = t;
      break;
    }
    default:
      j["thresholds"] = nullptr;
  }
  j["portion"] = policy.portion;
  if (policy.kind == PolicyKind::Random) j["seed"] = policy.seed;
  if (policy.saturated) j["saturated"] = true;
  return j.dump(2);
}

ThresholdPolicy policy_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [k, v] : j.items()) {
      if (k != "kind" && k != "metric" && k != "thresholds" && k != "portion" && k != "seed" && k != "saturated") {
        throw ValidationError("policy: unknown key '" + k + "'");
      }
    }
    ThresholdPolicy p;
    p.kind = parse_policy_kind(j.at("kind").get<std::string>());
    if (j.contains("metric")) p.metric = parse_metric(j.at("metric").get<std::string>());
    p.portion = j.at("portion").get<double>();
    if (!(p.portion >= 0.0 && p.portion <= 1.0)) throw ValidationError("policy: portion must be in [0, 1]");
    if (j.contains("seed")) p.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("saturated")) p.saturated = j.at("saturated").get<bool>();
    if (p.kind == PolicyKind::Universal) {
      p.universal_threshold = j.at("thresholds").get<double>();
    } else if (p.kind == PolicyKind::PerClass) {
      for (const auto& [cls, thr] : j.at("thresholds").items()) {
        p.per_class_thresholds[std::stoi(cls)] = thr.get<double>();
      }
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("policy: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ValidationError("policy: class keys must be integers");
  }
}

void save_policy(const ThresholdPolicy& policy, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write policy file '" + path + "'");
  out << policy_to_json(policy) << '\n';
}

ThresholdPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read policy file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

std::vector<double> quantile_grid(double step) {
  if (!(step > 0.0 && step < 1.0)) throw ValidationError("grid step must be in (0, 1)");
  const auto n = static_cast<int>(std::lround(1.0 / step));
  std::vector<double> grid;
  for (int i = 1; i < n; ++i) grid.push_back(static_cast<double>(i) / n);
  return grid;
}

std::vector<double> portion_sweep(double step) {
  std::vector<double> out = {0.0};
  for (double q : quantile_grid(step)) out.push_back(q);
  out.push_back(1.0);
  return out;
}

double quantile_threshold(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of an empty set");
  if (q <= 0.0) return -1.0;
  const auto n = sorted.size();
  // Tolerance keeps q*n that is an integer in exact arithmetic from
  // rounding up one slot.
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  idx = std::clamp<std::size_t>(idx, 1, n);
  return sorted[idx - 1];
}

std::vector<QuantileThreshold> universal_thresholds(std::span<const ValidationPoint> points,
                                                    std::span<const double> grid) {
  if (points.empty()) throw ValidationError("universal_thresholds needs at least one validation point");
  const auto u = sorted_uncertainties(points);
  std::vector<QuantileThreshold> out;
  out.reserve(grid.size());
  for (double q : grid) out.push_back({q, quantile_threshold(u, q)});
  return out;
}

ThresholdPolicy universal_policy(std::span<const ValidationPoint> points, double portion, UncertaintyMetric metric) {
  if (points.empty()) throw ValidationError("universal_policy needs at least one validation point");
  const auto u = sorted_uncertainties(points);
  ThresholdPolicy p;
  p.kind = PolicyKind::Universal;
  p.metric = metric;
  p.universal_threshold = quantile_threshold(u, 1.0 - portion);
  const auto kept = static_cast<std::size_t>(std::upper_bound(u.begin(), u.end(), p.universal_threshold) - u.begin());
  p.portion = static_cast<double>(u.size() - kept) / static_cast<double>(u.size());
  p.saturated = portion > 1.0;
  return p;
}

std::vector<SlopeRecord> per_class_slope(std::span<const ValidationPoint> points, std::span<const double> grid) {
  std::vector<SlopeRecord> all;
  for (const auto& c : class_columns(points)) {
    auto walk = class_walk(c, grid);
    all.insert(all.end(), walk.begin(), walk.end());
  }
  std::stable_sort(all.begin(), all.end(), steeper);
  return all;
}

std::vector<ThresholdPolicy> per_class_policies(std::span<const ValidationPoint> points,
                                                std::span<const double> targets, std::span<const double> grid,
                                                UncertaintyMetric metric) {
  if (points.empty()) throw ValidationError("per_class_thresholds needs at least one validation point");
  const auto cols = class_columns(points);
  std::vector<std::vector<SlopeRecord>> walks;
  ThresholdPolicy current;
  current.kind = PolicyKind::PerClass;
  current.metric = metric;
  for (const auto& c : cols) {
    auto walk = class_walk(c, grid);
    // Empty increments change nothing; drop them so they never block a class.
    std::erase_if(walk, [](const SlopeRecord& r) { return r.delta_total == 0; });
    walks.push_back(std::move(walk));
    current.per_class_thresholds[c.cls] = c.u.back();
  }

  std::vector<std::size_t> order(targets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });

  auto cmp = [](const SlopeRecord& a, const SlopeRecord& b) { return steeper(b, a); };
  std::priority_queue<SlopeRecord, std::vector<SlopeRecord>, decltype(cmp)> msq(cmp);
  std::vector<std::size_t> next(walks.size(), 0);
  std::map<int, std::size_t> col_of;
  // A class's head is the run of increments from its current position with
  // the highest average slope, so a flat step cannot hide a steep one behind
  // it. Equal averages keep the shortest run.
  auto head = [&](std::size_t ci) {
    const auto& w = walks[ci];
    std::size_t inc = 0, tot = 0, best_end = next[ci];
    std::size_t best_inc = 0, best_tot = 0;
    for (std::size_t j = next[ci]; j < w.size(); ++j) {
      inc += w[j].delta_incorrect;
      tot += w[j].delta_total;
      if (j == next[ci] || inc * best_tot > best_inc * tot) {
        best_end = j;
        best_inc = inc;
        best_tot = tot;
      }
    }
    SlopeRecord r = w[best_end];
    r.delta_incorrect = best_inc;
    r.delta_total = best_tot;
    r.slope = static_cast<double>(best_inc) / static_cast<double>(best_tot);
    next[ci] = best_end + 1;
    return r;
  };
  for (std::size_t i = 0; i < cols.size(); ++i) {
    col_of[cols[i].cls] = i;
    if (!walks[i].empty()) msq.push(head(i));
  }

  const auto n = static_cast<double>(points.size());
  std::size_t assigned = 0;
  std::vector<ThresholdPolicy> out(targets.size());
  std::size_t t = 0;
  auto snapshot = [&](std::size_t idx, bool saturated) {
    out[idx] = current;
    out[idx].portion = static_cast<double>(assigned) / n;
    out[idx].saturated = saturated;
  };
  while (t < order.size()) {
    const double target = targets[order[t]];
    if (static_cast<double>(assigned) / n >= target - 1e-12) {
      snapshot(order[t], false);
      ++t;
      continue;
    }
    if (msq.empty()) {
      snapshot(order[t], true);
      ++t;
      continue;
    }
    const SlopeRecord r = msq.top();
    msq.pop();
    current.per_class_thresholds[r.cls] = r.threshold;
    assigned += r.delta_total;
    const std::size_t ci = col_of[r.cls];
    if (next[ci] < walks[ci].size()) msq.push(head(ci));
  }
  return out;
}

ThresholdPolicy per_class_thresholds(std::span<const ValidationPoint> points, double target_portion,
                                     std::span<const double> grid, UncertaintyMetric metric) {
  if (!(target_portion >= 0.0)) throw ValidationError("target portion must be non-negative");
  const double t[1] = {target_portion};
  return per_class_policies(points, t, grid, metric).front();
}

ThresholdPolicy random_policy(double portion, std::uint64_t seed) {
  ThresholdPolicy p;
  p.kind = PolicyKind::Random;
  p.portion = std::clamp(portion, 0.0, 1.0);
  p.seed = seed;
  return p;
}

ThresholdPolicy oracle_policy(std::span<const ValidationPoint> points) {
  ThresholdPolicy p;
  p.kind = PolicyKind::Oracle;
  std::size_t wrong = 0;
  for (const auto& v : points) wrong += v.correct ? 0 : 1;
  p.portion = points.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(points.size());
  return p;
}

PolicyKind default_policy_kind(ModelFamily upstream) {
  return upstream == ModelFamily::BoostedTrees ? PolicyKind::PerClass : PolicyKind::Universal;
}

std::vector<ValidationPoint> validation_points(std::span<const CalibrationRecord> records,
                                               UncertaintyMetric metric) {
  std::vector<ValidationPoint> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({uncertainty_of(r.upstream, metric), r.upstream.label, r.upstream.label == r.truth});
  }
  return out;
}

std::vector<std::vector<bool>> escalation_masks(PolicyKind kind, std::span<const CalibrationRecord> records,
                                                std::span<const double> targets, UncertaintyMetric metric,
                                                std::span<const double> grid, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n == 0) throw ValidationError("no calibration records");
  const auto points = validation_points(records, metric);
  std::vector<std::vector<bool>> masks;
  masks.reserve(targets.size());

  switch (kind) {
    case PolicyKind::Universal:
      for (double t : targets) {
        const auto p = universal_policy(points, t, metric);
        std::vector<bool> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = points[i].uncertainty > p.universal_threshold;
        masks.push_back(std::move(m));
      }
      break;
    case PolicyKind::PerClass:
      for (const auto& p : per_class_policies(points, targets, grid, metric)) {
        std::vector<bool> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = p.escalate(points[i].uncertainty, points[i].predicted_class);
        masks.push_back(std::move(m));
      }
      break;
    case PolicyKind::Random:
    case PolicyKind::Oracle: {
      // Both escalate a prefix of a fixed priority order, so masks nest.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      if (kind == PolicyKind::Random) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
      } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (points[a].correct != points[b].correct) return !points[a].correct;
          return points[a].uncertainty > points[b].uncertainty;
        });
      }
      for (double t : targets) {
        const auto k = static_cast<std::size_t>(std::llround(std::clamp(t, 0.0, 1.0) * static_cast<double>(n)));
        std::vector<bool> m(n, false);
        for (std::size_t i = 0; i < k; ++i) m[order[i]] = true;
        masks.push_back(std::move(m));
      }
      break;
    }
  }
  return masks;
}

std::vector<CurvePoint> policy_curve(PolicyKind kind, std::span<const CalibrationRecord> records,
                                     std::span<const double> targets, int n_classes, UncertaintyMetric metric,
                                     std::span<const double> grid, std::uint64_t seed) {
  const auto masks = escalation_masks(kind, records, targets, metric, grid, seed);
  std::vector<int> truth(records.size());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    truth[i] = records[i].truth;
    wrong += records[i].upstream.label != records[i].truth ? 1 : 0;
  }
  std::vector<CurvePoint> curve;
  curve.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto& m = masks[t];
    std::size_t escalated = 0, captured = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!m[i]) continue;
      ++escalated;
      captured += records[i].upstream.label != records[i].truth ? 1 : 0;
    }
    CurvePoint c;
    c.target = targets[t];
    c.portion = static_cast<double>(escalated) / static_cast<double>(records.size());
    c.captured_incorrect = wrong > 0 ? static_cast<double>(captured) / static_cast<double>(wrong) : 1.0;
    c.f1 = weighted_f1(truth, final_labels(records, m), n_classes);
    curve.push_back(c);
  }
  return curve;
}

ThresholdPolicy make_policy(PolicyKind kind, std::span<const CalibrationRecord> records, double portion,
                            UncertaintyMetric metric, std::span<const double> grid, std::uint64_t seed) {
  const auto points = validation_points(records, metric);
  switch (kind) {
    case PolicyKind::Universal:
      return universal_policy(points, portion, metric);
    case PolicyKind::PerClass:
      return per_class_thresholds(points, portion, grid, metric);
    case PolicyKind::Random:
      return random_policy(portion, seed);
    case PolicyKind::Oracle:
      return oracle_policy(points);
  }
  throw ValidationError("unknown policy kind");
}

PolicyChoice choose_policy(PolicyKind kind, std::span<const CalibrationRecord> records, int n_classes,
                           SelectionMode mode, double target, UncertaintyMetric metric,
                           std::span<const double> grid, double knee_tolerance, std::uint64_t seed) {
  if (kind == PolicyKind::Oracle) throw ValidationError("the Oracle policy cannot be deployed");
  PolicyChoice choice;
  if (mode == SelectionMode::TargetPortion) {
    if (!(target >= 0.0 && target <= 1.0)) throw ValidationError("target portion must be in [0, 1]");
    const double t[1] = {target};
    choice.curve = policy_curve(kind, records, t, n_classes, metric, grid, seed);
    choice.policy = make_policy(kind, records, target, metric, grid, seed);
    choice.f1 = choice.curve.front().f1;
    return choice;
  }

  std::vector<double> targets = {0.0};
  targets.insert(targets.end(), grid.begin(), grid.end());
  targets.push_back(1.0);
  choice.curve = policy_curve(kind, records, targets, n_classes, metric, grid, seed);
  double best = -1.0;
  for (const auto& c : choice.curve) best = std::max(best, c.f1);

  const CurvePoint* pick = nullptr;
  if (mode == SelectionMode::ParetoKnee) {
    for (const auto& c : choice.curve) {
      if (c.f1 >= best - knee_tolerance) {
        pick = &c;
        break;
      }
    }
  } else {
    for (const auto& c : choice.curve) {
      if (c.f1 >= target) {
        pick = &c;
        break;
      }
    }
    if (pick == nullptr) {
      std::ostringstream msg;
      msg << "target F1 " << target << " is unreachable; the best achievable F1 is " << best;
      throw ValidationError(msg.str());
    }
  }
  choice.policy = make_policy(kind, records, pick->target, metric, grid, seed);
  choice.f1 = pick->f1;
  return choice;
}

}  // namespace flowcascade
