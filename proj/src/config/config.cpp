#include "flowcascade/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

class Reader {
 public:
  Reader(std::string location, std::filesystem::path base) : loc_(std::move(location)), base_(std::move(base)) {}

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ValidationError("config " + loc_ + ": '" + key + "' " + what);
  }

  // The object at `key` (or an empty one), after rejecting unknown members.
  json section(const json& parent, const std::string& prefix, const std::string& key,
               std::initializer_list<std::string_view> allowed) const {
    const std::string name = join(prefix, key);
    if (!parent.contains(key)) return json::object();
    const json& j = parent.at(key);
    if (!j.is_object()) fail(name, "must be an object");
    check_keys(j, name, allowed);
    return j;
  }

  void check_keys(const json& obj, const std::string& prefix, std::initializer_list<std::string_view> allowed) const {
    for (const auto& [k, v] : obj.items()) {
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) fail(join(prefix, k), "is not a known key");
    }
  }

  template <typename T>
  void integer(const json& obj, const std::string& prefix, const char* key, T& out, long long lo, long long hi) const {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string name = join(prefix, key);
    if (!v.is_number_integer()) fail(name, "must be an integer");
    long long x = 0;
    if (v.is_number_unsigned()) {
      const auto u = v.get<unsigned long long>();
      if (u > static_cast<unsigned long long>(hi)) fail(name, range_text(lo, hi));
      x = static_cast<long long>(u);
    } else {
      x = v.get<long long>();
    }
    if (x < lo || x > hi) fail(name, range_text(lo, hi));
    out = static_cast<T>(x);
  }

  void real(const json& obj, const std::string& prefix, const char* key, double& out, double lo, double hi,
            bool lo_open = false) const {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string name = join(prefix, key);
    if (!v.is_number()) fail(name, "must be a number");
    const double x = v.get<double>();
    if (!(lo_open ? x > lo : x >= lo) || !(x <= hi)) {
      std::ostringstream os;
      os << "must be in " << (lo_open ? "(" : "[") << lo << ", " << hi << "], got " << x;
      fail(name, os.str());
    }
    out = x;
  }

  std::optional<std::string> text(const json& obj, const std::string& prefix, const char* key) const {
    if (!obj.contains(key)) return std::nullopt;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(join(prefix, key), "must be a string");
    return v.get<std::string>();
  }

  template <typename Parse>
  auto named(const json& obj, const std::string& prefix, const char* key, Parse parse) const
      -> std::optional<decltype(parse(std::string_view{}))> {
    const auto s = text(obj, prefix, key);
    if (!s) return std::nullopt;
    try {
      return parse(*s);
    } catch (const ValidationError& e) {
      fail(join(prefix, key), std::string("is invalid: ") + e.what());
    }
  }

  // Input file: made absolute against the config directory and required to exist.
  void input_path(const json& obj, const std::string& prefix, const char* key, std::string& out) const {
    auto s = text(obj, prefix, key);
    if (!s) return;
    out = resolve(*s);
    if (!out.empty() && !std::filesystem::is_regular_file(out)) fail(join(prefix, key), "names a missing file: " + out);
  }

  void output_path(const json& obj, const std::string& prefix, const char* key, std::string& out) const {
    if (auto s = text(obj, prefix, key)) out = resolve(*s);
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

 private:
  static std::string range_text(long long lo, long long hi) {
    return "must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]";
  }

  std::string resolve(const std::string& p) const {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    if (path.is_relative()) path = std::filesystem::absolute(base_ / path);
    return path.lexically_normal().string();
  }

  std::string loc_;
  std::filesystem::path base_;
};

std::string short_family(ModelFamily f) { return f == ModelFamily::DecisionTree ? "dt" : "gbt"; }

std::optional<PolicyKind> servable_kind(std::string_view name) {
  if (name == "default" || name == "auto") return std::nullopt;
  const auto k = parse_policy_kind(name);
  if (k == PolicyKind::Oracle) throw ValidationError("Oracle needs ground truth and cannot route live traffic");
  return k;
}

ordered kind_json(const std::optional<PolicyKind>& k, bool automatic) {
  if (automatic) return "auto";
  return k ? ordered(std::string(policy_kind_name(*k))) : ordered("default");
}

ordered to_json(const PipelineConfig& c) {
  ordered j;
  j["seed"] = c.seed;
  j["paths"] = {{"cascade", c.paths.cascade},
                {"trace", c.paths.trace},
                {"labels", c.paths.labels},
                {"out_dir", c.paths.out_dir}};
  j["flow_state"] = {{"ttl_ms", c.flow_state.ttl_us / 1000},
                     {"q1_capacity", c.flow_state.q1_capacity},
                     {"q2_capacity", c.flow_state.q2_capacity},
                     {"q3_capacity", c.flow_state.q3_capacity},
                     {"n_slow_packets", c.flow_state.n_slow_packets}};
  ordered families = ordered::array();
  for (auto f : c.crafting.families) families.push_back(short_family(f));
  const auto& pool = c.crafting.pool;
  const auto& pl = c.crafting.placement;
  j["crafting"] = {{"families", families},
                   {"depths", c.crafting.depths},
                   {"train_fraction", c.crafting.train_fraction},
                   {"validation_fraction", c.crafting.validation_fraction},
                   {"timing_predictions", pool.timing_predictions},
                   {"dt_min_samples_leaf", pool.dt.min_samples_leaf},
                   {"dt_max_depth", pool.dt.max_depth},
                   {"gbt_learning_rate", pool.gbt.learning_rate},
                   {"gbt_num_leaves", pool.gbt.num_leaves},
                   {"gbt_feature_fraction", pool.gbt.feature_fraction},
                   {"gbt_min_data_in_leaf", pool.gbt.min_data_in_leaf},
                   {"gbt_rounds", pool.gbt.n_rounds},
                   {"f1_floor", pl.f1_floor},
                   {"slow_gain_per_packet", pl.slow_gain_per_packet},
                   {"min_f1_gap", pl.min_f1_gap},
                   {"min_latency_ratio", pl.min_latency_ratio}};
  const auto& a = c.assignment;
  j["assignment"] = {{"metric", std::string(metric_name(a.metric))},
                     {"grid_step", a.grid_step},
                     {"mode", std::string(selection_mode_name(a.mode))},
                     {"target", a.target},
                     {"knee_tolerance", a.knee_tolerance},
                     {"fastest_policy", kind_json(a.fastest_kind, a.fastest_auto)},
                     {"fast_policy", kind_json(a.fast_kind, a.fast_auto)}};
  j["harness"] = {{"rates", c.harness.rates},
                  {"consumers", c.harness.consumers},
                  {"speed", c.harness.speed},
                  {"max_duration_s", c.harness.max_duration_s}};
  return j;
}

}  // namespace

PipelineConfig parse_config(const std::string& json_text, const std::string& location, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(json_text.empty() ? std::string("{}") : json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + location + ": not valid JSON (" + e.what() + ")");
  }
  const Reader r(location, base_dir);
  if (!root.is_object()) r.fail("(root)", "must be an object");
  r.check_keys(root, "", {"seed", "paths", "flow_state", "crafting", "assignment", "harness"});

  PipelineConfig c;
  r.integer(root, "", "seed", c.seed, 0, INT64_MAX);

  const json paths = r.section(root, "", "paths", {"cascade", "trace", "labels", "out_dir"});
  r.input_path(paths, "paths", "cascade", c.paths.cascade);
  r.input_path(paths, "paths", "trace", c.paths.trace);
  r.input_path(paths, "paths", "labels", c.paths.labels);
  r.output_path(paths, "paths", "out_dir", c.paths.out_dir);

  const json fs =
      r.section(root, "", "flow_state", {"ttl_ms", "q1_capacity", "q2_capacity", "q3_capacity", "n_slow_packets"});
  std::int64_t ttl_ms = c.flow_state.ttl_us / 1000;
  r.integer(fs, "flow_state", "ttl_ms", ttl_ms, 1, 86'400'000);
  c.flow_state.ttl_us = ttl_ms * 1000;
  r.integer(fs, "flow_state", "q1_capacity", c.flow_state.q1_capacity, 1, 1LL << 26);
  r.integer(fs, "flow_state", "q2_capacity", c.flow_state.q2_capacity, 1, 1LL << 26);
  r.integer(fs, "flow_state", "q3_capacity", c.flow_state.q3_capacity, 1, 1LL << 26);
  r.integer(fs, "flow_state", "n_slow_packets", c.flow_state.n_slow_packets, 1, 64);

  const json cr = r.section(root, "", "crafting",
                            {"families", "depths", "train_fraction", "validation_fraction", "timing_predictions",
                             "dt_min_samples_leaf", "dt_max_depth", "gbt_learning_rate", "gbt_num_leaves",
                             "gbt_feature_fraction", "gbt_min_data_in_leaf", "gbt_rounds", "f1_floor",
                             "slow_gain_per_packet", "min_f1_gap", "min_latency_ratio"});
  if (cr.contains("families")) {
    const json& f = cr.at("families");
    if (!f.is_array() || f.empty()) r.fail("crafting.families", "must be a non-empty array of \"dt\"/\"gbt\"");
    c.crafting.families.clear();
    for (const auto& v : f) {
      if (!v.is_string()) r.fail("crafting.families", "must hold strings");
      ModelFamily fam{};
      try {
        fam = parse_family(v.get<std::string>());
      } catch (const ValidationError& e) {
        r.fail("crafting.families", std::string("is invalid: ") + e.what());
      }
      if (std::find(c.crafting.families.begin(), c.crafting.families.end(), fam) != c.crafting.families.end()) {
        r.fail("crafting.families", "lists a family twice");
      }
      c.crafting.families.push_back(fam);
    }
  }
  if (cr.contains("depths")) {
    const json& d = cr.at("depths");
    if (!d.is_array() || d.empty()) r.fail("crafting.depths", "must be a non-empty array of packet depths");
    std::set<int> seen;
    for (const auto& v : d) {
      if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 64) {
        r.fail("crafting.depths", "must hold integers in [1, 64]");
      }
      seen.insert(v.get<int>());
    }
    if (seen.size() != d.size()) r.fail("crafting.depths", "lists a depth twice");
    c.crafting.depths.assign(seen.begin(), seen.end());
  }
  r.real(cr, "crafting", "train_fraction", c.crafting.train_fraction, 0.0, 1.0, true);
  r.real(cr, "crafting", "validation_fraction", c.crafting.validation_fraction, 0.0, 1.0, true);
  if (c.crafting.train_fraction + c.crafting.validation_fraction >= 1.0) {
    r.fail("crafting.validation_fraction", "plus train_fraction must leave room for a test split");
  }
  auto& pool = c.crafting.pool;
  r.integer(cr, "crafting", "timing_predictions", pool.timing_predictions, 1, 10'000'000);
  r.integer(cr, "crafting", "dt_min_samples_leaf", pool.dt.min_samples_leaf, 1, 1'000'000);
  r.integer(cr, "crafting", "dt_max_depth", pool.dt.max_depth, -1, 1000);
  if (pool.dt.max_depth == 0) r.fail("crafting.dt_max_depth", "must be -1 (unlimited) or positive");
  r.real(cr, "crafting", "gbt_learning_rate", pool.gbt.learning_rate, 0.0, 1.0, true);
  r.integer(cr, "crafting", "gbt_num_leaves", pool.gbt.num_leaves, 2, 1 << 16);
  r.real(cr, "crafting", "gbt_feature_fraction", pool.gbt.feature_fraction, 0.0, 1.0, true);
  r.integer(cr, "crafting", "gbt_min_data_in_leaf", pool.gbt.min_data_in_leaf, 1, 1'000'000);
  r.integer(cr, "crafting", "gbt_rounds", pool.gbt.n_rounds, 1, 100'000);
  auto& pl = c.crafting.placement;
  r.real(cr, "crafting", "f1_floor", pl.f1_floor, 0.0, 1.0);
  r.real(cr, "crafting", "slow_gain_per_packet", pl.slow_gain_per_packet, 0.0, 1.0);
  r.real(cr, "crafting", "min_f1_gap", pl.min_f1_gap, 0.0, 1.0);
  r.real(cr, "crafting", "min_latency_ratio", pl.min_latency_ratio, 1.0, 1e9);

  const json as = r.section(root, "", "assignment",
                            {"metric", "grid_step", "mode", "target", "knee_tolerance", "fastest_policy", "fast_policy"});
  auto& a = c.assignment;
  if (auto m = r.named(as, "assignment", "metric", parse_metric)) a.metric = *m;
  r.real(as, "assignment", "grid_step", a.grid_step, 0.0, 0.5, true);
  if (auto m = r.named(as, "assignment", "mode", parse_selection_mode)) a.mode = *m;
  r.real(as, "assignment", "target", a.target, 0.0, 1.0);
  r.real(as, "assignment", "knee_tolerance", a.knee_tolerance, 0.0, 1.0);
  if (auto k = r.named(as, "assignment", "fastest_policy", servable_kind)) a.fastest_kind = *k;
  if (auto k = r.named(as, "assignment", "fast_policy", servable_kind)) a.fast_kind = *k;
  a.fastest_auto = as.value("fastest_policy", "") == "auto";
  a.fast_auto = as.value("fast_policy", "") == "auto";
  if (a.mode != SelectionMode::ParetoKnee && !as.contains("target")) {
    r.fail("assignment.target", "is required when mode is " + std::string(selection_mode_name(a.mode)));
  }

  const json h = r.section(root, "", "harness", {"rates", "consumers", "speed", "max_duration_s"});
  if (h.contains("rates")) {
    const json& rates = h.at("rates");
    if (!rates.is_array()) r.fail("harness.rates", "must be an array of flows per second");
    for (const auto& v : rates) {
      if (!v.is_number() || !(v.get<double>() > 0.0)) r.fail("harness.rates", "must hold positive numbers");
      c.harness.rates.push_back(v.get<double>());
    }
  }
  r.integer(h, "harness", "consumers", c.harness.consumers, 1, 1024);
  r.real(h, "harness", "speed", c.harness.speed, 0.0, 1e6);
  r.real(h, "harness", "max_duration_s", c.harness.max_duration_s, 0.0, 1e7);

  return c;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config " + path + ": cannot open");
  std::ostringstream os;
  os << in.rdbuf();
  auto base = std::filesystem::path(path).parent_path();
  if (base.empty()) base = ".";
  return parse_config(os.str(), path, base.string());
}

std::string serialize_config(const PipelineConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string config_hash(const PipelineConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace flowcascade
