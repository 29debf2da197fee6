#include "flowcascade/crafting.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "flowcascade/clock.hpp"
#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

std::optional<std::size_t> index_of(std::span<const ModelProfile> profiles, const std::string& id) {
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].model_id == id) return i;
  }
  return std::nullopt;
}

// Whether a later stage is worth keeping behind an earlier one.
bool worth_a_stage(const ModelProfile& later, const ModelProfile& earlier, const PlacementConfig& cfg) {
  if (later.model_id == earlier.model_id) return false;
  if (later.f1 - earlier.f1 < cfg.min_f1_gap) return false;
  const double ratio = earlier.e2e_us > 0.0 ? later.e2e_us / earlier.e2e_us : 0.0;
  return ratio >= cfg.min_latency_ratio;
}

}  // namespace

std::string profile_id(ModelFamily family, int depth) {
  return std::string(family == ModelFamily::DecisionTree ? "dt" : "gbt") + "-d" + std::to_string(depth);
}

std::vector<Prediction> predict_flows(const ClassifierModel& model, const FlowDataset& data,
                                      std::span<const std::size_t> idx) {
  std::vector<Prediction> out;
  out.reserve(idx.size());
  std::vector<std::int8_t> x(model.input_width());
  for (auto i : idx) {
    flow_features(data.flows[i], model.packet_depth(), x);
    out.push_back(model.predict(x));
  }
  return out;
}

ModelProfile profile_model(const ClassifierModel& model, const FlowDataset& data,
                           std::span<const std::size_t> validation, int timing_predictions) {
  if (validation.empty()) throw ValidationError("profiling needs a non-empty validation split");
  ModelProfile p;
  p.family = model.family();
  p.packet_depth = model.packet_depth();
  p.model_id = profile_id(p.family, p.packet_depth);

  const auto preds = predict_flows(model, data, validation);
  std::vector<int> truth = data.labels(validation), labels;
  for (const auto& pr : preds) labels.push_back(pr.label);
  p.f1 = weighted_f1(truth, labels, std::max(model.n_classes(), data.n_classes));

  // Time single predictions over a bounded set of prepared rows.
  const std::size_t n_rows = std::min<std::size_t>(validation.size(), 256);
  TernaryMatrix rows = feature_matrix(data, validation.subspan(0, n_rows), model.packet_depth());
  std::vector<double> times;
  const int reps = std::max(timing_predictions, 1000);
  times.reserve(static_cast<std::size_t>(reps));
  volatile int sink = 0;
  for (int r = 0; r < reps; ++r) {
    const auto row = rows.row(static_cast<std::size_t>(r) % n_rows);
    const auto t0 = monotonic_ns();
    const auto pred = model.predict(row);
    const auto t1 = monotonic_ns();
    sink = sink + pred.label;
    times.push_back(static_cast<double>(t1 - t0) / 1000.0);
  }
  p.inference_us = std::max(median(times), 1e-3);

  std::vector<double> decode, waits;
  for (auto i : validation) {
    const auto& f = data.flows[i];
    for (auto ns : f.featurize_ns) decode.push_back(static_cast<double>(ns) / 1000.0);
    waits.push_back(static_cast<double>(collection_wait_us(f, p.packet_depth)));
  }
  p.featurization_us = median(decode) * p.packet_depth;
  p.collection_us = p.packet_depth == 1 ? 0.0 : median(waits);
  p.e2e_us = p.inference_us + p.featurization_us + p.collection_us;
  return p;
}

PoolEntry train_one(const FlowDataset& data, const DatasetSplit& split, ModelFamily family, int depth,
                    const PoolConfig& cfg) {
  PoolEntry e;
  const TernaryMatrix X = feature_matrix(data, split.train, depth);
  const auto y = data.labels(split.train);
  e.mask = prune_features(X);
  ClassifierModel m = family == ModelFamily::DecisionTree
                          ? train_decision_tree(X, y, cfg.dt, data.n_classes, e.mask.kept)
                          : train_boosted_trees(X, y, cfg.gbt, data.n_classes, e.mask.kept);
  e.model = std::make_shared<const ClassifierModel>(std::move(m));
  e.profile = profile_model(*e.model, data, split.validation, cfg.timing_predictions);
  return e;
}

std::vector<PoolEntry> train_pool(const FlowDataset& data, const DatasetSplit& split,
                                  std::span<const ModelFamily> families, std::span<const int> depths,
                                  const PoolConfig& cfg) {
  std::vector<PoolEntry> pool;
  for (int depth : depths) {
    for (ModelFamily family : families) {
      try {
        pool.push_back(train_one(data, split, family, depth, cfg));
      } catch (const Error& err) {
        PoolEntry e;
        e.profile.model_id = profile_id(family, depth);
        e.profile.family = family;
        e.profile.packet_depth = depth;
        e.profile.failed = true;
        e.profile.error = err.what();
        pool.push_back(std::move(e));
      }
    }
  }
  return pool;
}

bool dominates(const ModelProfile& a, const ModelProfile& b) {
  return a.f1 >= b.f1 && a.e2e_us <= b.e2e_us && (a.f1 > b.f1 || a.e2e_us < b.e2e_us);
}

std::vector<ModelProfile> pareto_front(std::span<const ModelProfile> profiles) {
  std::vector<ModelProfile> front;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].failed) continue;
    bool dominated = false;
    for (std::size_t j = 0; j < profiles.size() && !dominated; ++j) {
      dominated = j != i && !profiles[j].failed && dominates(profiles[j], profiles[i]);
    }
    if (!dominated) front.push_back(profiles[i]);
  }
  std::stable_sort(front.begin(), front.end(),
                   [](const ModelProfile& a, const ModelProfile& b) { return a.e2e_us < b.e2e_us; });
  return front;
}

Placement place_models(std::span<const ModelProfile> front, std::span<const ModelProfile> profiles,
                       const PlacementConfig& cfg) {
  if (front.empty()) throw ValidationError("place_models: empty Pareto front");
  Placement out;

  // Fastest: quickest depth-1 front member above the floor.
  for (const auto& p : front) {
    if (p.packet_depth != 1 || p.f1 < cfg.f1_floor) continue;
    const auto idx = index_of(profiles, p.model_id);
    if (!idx) continue;
    if (!out.fastest || p.e2e_us < profiles[*out.fastest].e2e_us) out.fastest = idx;
  }

  // Fast: most accurate depth-1 model.
  std::optional<std::size_t> best_d1;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    if (p.failed || p.packet_depth != 1) continue;
    if (!best_d1 || p.f1 > profiles[*best_d1].f1 ||
        (p.f1 == profiles[*best_d1].f1 && p.e2e_us < profiles[*best_d1].e2e_us)) {
      best_d1 = i;
    }
  }
  if (out.fastest && best_d1 && worth_a_stage(profiles[*best_d1], profiles[*out.fastest], cfg)) {
    out.fast = best_d1;
  }

  // Slow: best family at the depth where the per-packet F1 gain flattens.
  std::map<int, std::size_t> best_at_depth;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    if (p.failed) continue;
    auto it = best_at_depth.find(p.packet_depth);
    if (it == best_at_depth.end() || p.f1 > profiles[it->second].f1) best_at_depth[p.packet_depth] = i;
  }
  std::optional<std::size_t> slow;
  if (!best_at_depth.empty()) {
    auto it = best_at_depth.begin();
    slow = it->second;
    for (auto next = std::next(it); next != best_at_depth.end(); it = next, ++next) {
      const double gain = (profiles[next->second].f1 - profiles[it->second].f1) /
                          static_cast<double>(next->first - it->first);
      if (gain < cfg.slow_gain_per_packet) break;
      slow = next->second;
    }
  }

  if (!out.fastest) {
    out.warnings.push_back("no depth-1 model reaches the F1 floor; serving a single model");
    std::optional<std::size_t> single = slow;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
      if (profiles[i].failed) continue;
      if (!single || profiles[i].f1 > profiles[*single].f1) single = i;
    }
    if (!single) throw ValidationError("place_models: no usable profile");
    if (profiles[*single].packet_depth == 1) {
      out.fastest = single;
    } else {
      out.slow = single;
    }
    return out;
  }

  const std::size_t previous = out.fast ? *out.fast : *out.fastest;
  if (slow && profiles[*slow].packet_depth > 1 && worth_a_stage(profiles[*slow], profiles[previous], cfg)) {
    out.slow = slow;
  }
  return out;
}

CascadeSpec cascade_from_placement(const Placement& placement, std::span<const PoolEntry> pool) {
  CascadeSpec spec;
  auto add = [&](Stage role, std::optional<std::size_t> idx) {
    if (!idx) return;
    const auto& e = pool[*idx];
    StageSpec st;
    st.role = role;
    st.model = e.model;
    st.mask = e.mask;
    spec.stages.push_back(std::move(st));
  };
  add(Stage::Fastest, placement.fastest);
  add(Stage::Fast, placement.fast);
  add(Stage::Slow, placement.slow);
  spec.validate();
  return spec;
}

namespace {

std::vector<std::vector<Prediction>> stage_predictions(const CascadeSpec& spec, const FlowDataset& data,
                                                       std::span<const std::size_t> idx) {
  std::vector<std::vector<Prediction>> preds;
  for (const auto& st : spec.stages) preds.push_back(predict_flows(*st.model, data, idx));
  return preds;
}

// Final label when flow j enters the cascade at stage `from`.
int label_from(const CascadeSpec& spec, const std::vector<std::vector<Prediction>>& preds, std::size_t from,
               std::size_t j, const FlowKey& key, std::size_t* decided_stage = nullptr) {
  std::size_t s = from;
  while (s + 1 < spec.stages.size() && spec.stages[s].policy.escalate(preds[s][j], key)) ++s;
  if (decided_stage != nullptr) *decided_stage = s;
  return preds[s][j].label;
}

}  // namespace

OfflineResult offline_cascade(const CascadeSpec& spec, const std::vector<std::vector<Prediction>>& preds,
                              const FlowDataset& data, std::span<const std::size_t> idx) {
  OfflineResult r;
  for (std::size_t j = 0; j < idx.size(); ++j) {
    std::size_t s = 0;
    r.labels.push_back(label_from(spec, preds, 0, j, data.flows[idx[j]].key, &s));
    r.decided_by.push_back(decided_by_for(spec.stages[s].role));
  }
  r.f1 = weighted_f1(data.labels(idx), r.labels, std::max(spec.n_classes(), data.n_classes));
  return r;
}

OfflineResult offline_cascade(const CascadeSpec& spec, const FlowDataset& data, std::span<const std::size_t> idx) {
  return offline_cascade(spec, stage_predictions(spec, data, idx), data, idx);
}

namespace {

// Universal vs PerClass on the same records. A pick counts when its F1 is
// within tolerance of the better pick (exact for TargetPortion); among those
// the smaller portion wins, then the higher F1, then the family default.
PolicyChoice pick_policy_kind(PolicyKind preferred, std::span<const CalibrationRecord> records, int n_classes,
                              const CalibrationConfig& cfg, std::span<const double> grid) {
  std::vector<PolicyChoice> picks;
  std::optional<ValidationError> last;
  for (PolicyKind k : {preferred, preferred == PolicyKind::Universal ? PolicyKind::PerClass : PolicyKind::Universal}) {
    try {
      picks.push_back(choose_policy(k, records, n_classes, cfg.mode, cfg.target, cfg.metric, grid,
                                    cfg.knee_tolerance, cfg.seed));
    } catch (const ValidationError& e) {
      last = e;
    }
  }
  if (picks.empty()) throw *last;
  double best = -1.0;
  for (const auto& p : picks) best = std::max(best, p.f1);
  const double tol = cfg.mode == SelectionMode::TargetPortion ? 0.0 : cfg.knee_tolerance;
  const PolicyChoice* win = nullptr;
  for (const auto& p : picks) {
    if (p.f1 < best - tol) continue;
    if (win == nullptr || p.policy.portion < win->policy.portion ||
        (p.policy.portion == win->policy.portion && p.f1 > win->f1)) {
      win = &p;
    }
  }
  return *win;
}

}  // namespace

std::vector<EdgeCalibration> calibrate_cascade(CascadeSpec& spec, const FlowDataset& data,
                                               std::span<const std::size_t> idx, const CalibrationConfig& cfg) {
  spec.validate();
  if (idx.empty()) throw ValidationError("calibration needs labeled flows");
  const auto preds = stage_predictions(spec, data, idx);
  const auto grid = quantile_grid(cfg.grid_step);
  const int n_classes = std::max(spec.n_classes(), data.n_classes);
  std::vector<EdgeCalibration> edges;
  for (std::size_t s = spec.stages.size(); s-- > 1;) {
    const std::size_t up = s - 1;
    auto& stage = spec.stages[up];
    std::vector<CalibrationRecord> records(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& flow = data.flows[idx[j]];
      records[j].upstream = preds[up][j];
      records[j].downstream_label = label_from(spec, preds, s, j, flow.key);
      records[j].truth = flow.label;
      records[j].key = flow.key;
    }
    const bool fastest = stage.role == Stage::Fastest;
    const auto& override_kind = fastest ? cfg.fastest_kind : cfg.fast_kind;
    EdgeCalibration e;
    e.from = stage.role;
    e.kind = override_kind.value_or(default_policy_kind(stage.model->family()));
    if (fastest ? cfg.fastest_auto : cfg.fast_auto) {
      e.kind = default_policy_kind(stage.model->family());
      e.choice = pick_policy_kind(e.kind, records, n_classes, cfg, grid);
      e.kind = e.choice.policy.kind;
    } else {
      e.choice = choose_policy(e.kind, records, n_classes, cfg.mode, cfg.target, cfg.metric, grid,
                               cfg.knee_tolerance, cfg.seed);
    }
    e.choice.policy.metric = cfg.metric;
    stage.policy = e.choice.policy;
    e.records = std::move(records);
    edges.push_back(std::move(e));
  }
  std::reverse(edges.begin(), edges.end());
  return edges;
}

void write_profiles_csv(const std::string& path, std::span<const ModelProfile> profiles) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write profiles CSV '" + path + "'");
  out << "model_id,family,packet_depth,f1_weighted,inference_us,featurization_us,collection_us,e2e_us,failed,error\n";
  for (const auto& p : profiles) {
    std::string err = p.error;
    std::replace(err.begin(), err.end(), ',', ';');
    out << p.model_id << ',' << family_name(p.family) << ',' << p.packet_depth << ',' << p.f1 << ','
        << p.inference_us << ',' << p.featurization_us << ',' << p.collection_us << ',' << p.e2e_us << ','
        << (p.failed ? 1 : 0) << ',' << err << '\n';
  }
}

}  // namespace flowcascade
