// flowcascade: synth, craft, calibrate, serve, bench, dump.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowcascade/config.hpp"
#include "flowcascade/crafting.hpp"
#include "flowcascade/dataset.hpp"
#include "flowcascade/error.hpp"
#include "flowcascade/harness.hpp"
#include "flowcascade/pipeline.hpp"

namespace fs = std::filesystem;
using namespace flowcascade;
using ojson = nlohmann::ordered_json;

namespace {

// Flags shared by every subcommand; values left unset keep the config's.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON pipeline config")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "seed for splits, boosting and random policies");
}

PipelineConfig effective(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::string need(const std::string& flag, const std::string& value) {
  if (value.empty()) throw ValidationError("missing " + flag + " (flag or config path)");
  return value;
}

std::string out_dir_of(const PipelineConfig& cfg, const std::string& flag) {
  std::string d = !flag.empty() ? flag : (!cfg.paths.out_dir.empty() ? cfg.paths.out_dir : ".");
  fs::create_directories(d);
  return d;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

// Stamps the effective config hash into a saved cascade spec.
void stamp_cascade(const std::string& spec_path, const PipelineConfig& cfg) {
  std::ifstream in(spec_path);
  ojson j = ojson::parse(in);
  j["config_hash"] = config_hash(cfg);
  write_text(spec_path, j.dump(2) + "\n");
}

void fill_calibration(CalibrationConfig& a, const PipelineConfig& cfg) {
  a = cfg.assignment;
  a.seed = cfg.seed;
}

DatasetSplit split_of(const FlowDataset& data, const PipelineConfig& cfg) {
  return split_dataset(data.flows.size(), cfg.seed, cfg.crafting.train_fraction, cfg.crafting.validation_fraction);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

int run_synth(const Common& common, const std::string& out_dir, const std::string& name, SyntheticConfig sc) {
  const auto cfg = effective(common);
  sc.seed = cfg.seed;
  const auto dir = out_dir_of(cfg, out_dir);
  const auto t = make_synthetic_benchmark(sc, dir, name);
  std::cout << "capture " << t.capture << "\nlabels  " << t.labels << "\nclasses";
  for (const auto& c : t.class_names) std::cout << ' ' << c;
  std::cout << '\n';
  return 0;
}

struct CraftArgs {
  std::string trace, labels, out_dir, depths, families;
  std::optional<int> gbt_rounds;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int run_craft(const Common& common, const CraftArgs& a) {
  auto cfg = effective(common);
  if (!a.depths.empty()) {
    cfg.crafting.depths.clear();
    for (const auto& d : split_list(a.depths)) cfg.crafting.depths.push_back(std::stoi(d));
  }
  if (!a.families.empty()) {
    cfg.crafting.families.clear();
    for (const auto& f : split_list(a.families)) cfg.crafting.families.push_back(parse_family(f));
  }
  if (a.gbt_rounds) cfg.crafting.pool.gbt.n_rounds = *a.gbt_rounds;
  const auto trace = need("--trace", !a.trace.empty() ? a.trace : cfg.paths.trace);
  const auto labels = need("--labels", !a.labels.empty() ? a.labels : cfg.paths.labels);
  const auto dir = out_dir_of(cfg, a.out_dir);

  std::vector<int> depths;
  for (int d : cfg.crafting.depths) {
    if (d <= cfg.flow_state.n_slow_packets) depths.push_back(d);
  }
  if (depths.empty()) throw ValidationError("no packet depth within flow_state.n_slow_packets");
  const auto data = load_flow_dataset(trace, labels, *std::max_element(depths.begin(), depths.end()));
  const auto split = split_of(data, cfg);
  std::cerr << "loaded " << data.flows.size() << " flows, " << data.n_classes << " classes\n";

  PoolConfig pc = cfg.crafting.pool;
  pc.gbt.seed = cfg.seed;
  const auto pool = train_pool(data, split, cfg.crafting.families, depths, pc);
  std::vector<ModelProfile> profiles;
  for (const auto& e : pool) profiles.push_back(e.profile);
  write_profiles_csv(dir + "/profiles.csv", profiles);
  const auto front = pareto_front(profiles);
  const auto placement = place_models(front, profiles, cfg.crafting.placement);
  for (const auto& w : placement.warnings) std::cerr << "warning: " << w << '\n';

  for (const auto& p : profiles) {
    const bool on_front =
        std::any_of(front.begin(), front.end(), [&](const ModelProfile& f) { return f.model_id == p.model_id; });
    std::cout << p.model_id << (on_front ? " *" : "  ") << " f1=" << fmt(p.f1)
              << " e2e_us=" << fmt(p.e2e_us, 1) << (p.failed ? " FAILED: " + p.error : "") << '\n';
  }
  auto spec = cascade_from_placement(placement, pool);
  for (const auto& st : spec.stages) {
    std::cout << stage_name(st.role) << " <- " << profile_id(st.model->family(), st.model->packet_depth()) << '\n';
  }
  save_cascade(spec, dir);
  stamp_cascade(dir + "/cascade.json", cfg);
  write_text(dir + "/config.json", serialize_config(cfg));
  std::cout << "cascade " << dir << "/cascade.json (uncalibrated) config_hash " << config_hash(cfg) << '\n';
  return 0;
}

struct CalibrateArgs {
  std::string cascade, trace, labels, out_dir, mode, metric, sweep_csv;
  std::optional<double> target;
};

int run_calibrate(const Common& common, const CalibrateArgs& a) {
  auto cfg = effective(common);
  if (!a.mode.empty()) cfg.assignment.mode = parse_selection_mode(a.mode);
  if (!a.metric.empty()) cfg.assignment.metric = parse_metric(a.metric);
  if (a.target) cfg.assignment.target = *a.target;
  const auto cascade_path = need("--cascade", !a.cascade.empty() ? a.cascade : cfg.paths.cascade);
  const auto trace = need("--trace", !a.trace.empty() ? a.trace : cfg.paths.trace);
  const auto labels = need("--labels", !a.labels.empty() ? a.labels : cfg.paths.labels);
  auto spec = load_cascade(cascade_path);
  const auto data = load_flow_dataset(trace, labels, spec.n_slow_packets());
  const auto split = split_of(data, cfg);

  CalibrationConfig cc;
  fill_calibration(cc, cfg);
  const auto edges = calibrate_cascade(spec, data, split.validation, cc);
  for (const auto& e : edges) {
    std::cout << stage_name(e.from) << " -> next: " << policy_kind_name(e.kind) << " portion="
              << fmt(e.choice.policy.portion) << " f1=" << fmt(e.choice.f1) << '\n';
  }
  const auto test = offline_cascade(spec, data, split.test);
  std::cout << "offline test F1 " << fmt(test.f1) << '\n';

  if (!a.sweep_csv.empty()) {
    const std::vector<PolicyKind> kinds{PolicyKind::Universal, PolicyKind::PerClass, PolicyKind::Random};
    const auto grid = quantile_grid(cc.grid_step);
    const auto portions = portion_sweep(0.05);
    for (const auto& e : edges) {
      const auto sweep = sweep_assignment(e.records, data.n_classes, kinds, portions, cc.metric, grid, cfg.seed);
      const auto path = edges.size() == 1 ? a.sweep_csv : a.sweep_csv + "." + std::string(stage_name(e.from));
      write_sweep_csv(path, sweep);
      std::cout << "sweep " << path << '\n';
    }
  }

  const auto dir = out_dir_of(cfg, !a.out_dir.empty() ? a.out_dir : fs::path(cascade_path).parent_path().string());
  save_cascade(spec, dir);
  stamp_cascade(dir + "/cascade.json", cfg);
  write_text(dir + "/config.json", serialize_config(cfg));
  std::cout << "cascade " << dir << "/cascade.json config_hash " << config_hash(cfg) << '\n';
  return 0;
}

ServeConfig serve_config(const PipelineConfig& cfg) {
  ServeConfig sc;
  sc.flow_state = cfg.flow_state;
  sc.consumers = cfg.harness.consumers;
  return sc;
}

struct ServeArgs {
  std::string cascade, pcap, labels, out;
  std::optional<int> consumers;
  std::optional<double> speed;
};

int run_serve(const Common& common, const ServeArgs& a) {
  auto cfg = effective(common);
  if (a.consumers) cfg.harness.consumers = *a.consumers;
  const double speed = a.speed.value_or(0.0);
  const auto spec = load_cascade(need("--cascade", !a.cascade.empty() ? a.cascade : cfg.paths.cascade));
  const auto pcap = need("--pcap", !a.pcap.empty() ? a.pcap : cfg.paths.trace);
  const auto labels = !a.labels.empty() ? read_labels(a.labels) : std::map<FlowKey, int>{};
  const auto schedule = build_schedule(pcap, labels.empty() ? nullptr : &labels, {});
  const auto run = replay_into(spec, schedule, speed, serve_config(cfg));
  if (!a.out.empty()) write_outcomes_csv(a.out, run.outcomes);
  auto report = score(run.outcomes, schedule.labels);
  if (speed > 0.0) report.pacing = run.pacing;
  report.config_hash = config_hash(cfg);
  std::cout << report_to_json(report) << '\n';
  return 0;
}

struct BenchArgs {
  std::string cascade, trace, labels, out, rates;
  std::optional<int> consumers;
  std::optional<double> speed, max_duration;
};

int run_bench(const Common& common, const BenchArgs& a) {
  auto cfg = effective(common);
  if (a.consumers) cfg.harness.consumers = *a.consumers;
  if (a.speed) cfg.harness.speed = *a.speed;
  if (a.max_duration) cfg.harness.max_duration_s = *a.max_duration;
  if (!a.rates.empty()) {
    cfg.harness.rates.clear();
    for (const auto& r : split_list(a.rates)) {
      const double v = std::stod(r);
      if (!(v > 0.0)) throw ValidationError("--rates must be positive");
      cfg.harness.rates.push_back(v);
    }
  }
  const auto cascade_path = need("--cascade", !a.cascade.empty() ? a.cascade : cfg.paths.cascade);
  const auto spec = load_cascade(cascade_path);
  const auto trace = need("--trace", !a.trace.empty() ? a.trace : cfg.paths.trace);
  const auto labels_path = !a.labels.empty() ? a.labels : cfg.paths.labels;
  const auto labels = labels_path.empty() ? std::map<FlowKey, int>{} : read_labels(labels_path);
  const auto hash = config_hash(cfg);

  std::vector<double> rates = cfg.harness.rates;
  if (rates.empty()) rates.push_back(0.0);
  ojson runs = ojson::array();
  for (double rate : rates) {
    ReplayOptions ro;
    ro.target_rate = rate;
    ro.max_duration_s = cfg.harness.max_duration_s;
    ro.seed = cfg.seed;
    const auto schedule = build_schedule(trace, labels.empty() ? nullptr : &labels, ro);
    const auto run = replay_into(spec, schedule, cfg.harness.speed, serve_config(cfg));
    auto report = score(run.outcomes, schedule.labels);
    if (cfg.harness.speed > 0.0) report.pacing = run.pacing;
    report.config_hash = hash;
    ojson extra = {{"target_rate", rate},
                   {"native_rate", schedule.native_flow_rate},
                   {"flows_scheduled", schedule.n_flows},
                   {"consumers", cfg.harness.consumers},
                   {"speed", cfg.harness.speed},
                   {"q1_dropped", run.counters.q1_dropped},
                   {"q3_dropped", run.counters.q3_dropped},
                   {"q2_evicted", run.counters.q2_evicted},
                   {"skipped_frames", run.skipped_frames}};
    runs.push_back(ojson::parse(report_to_json(report, extra.dump())));
    std::cerr << "rate " << (rate > 0 ? fmt(rate, 0) : "native") << ": service " << fmt(report.service_rate, 1)
              << " flows/s, p50 " << fmt(report.latency.p50_us, 0) << " us, miss " << fmt(report.miss_rate)
              << (report.f1_weighted ? ", F1 " + fmt(*report.f1_weighted) : "")
              << (report.pacing && report.pacing->unreliable ? " (pacing unreliable)" : "") << '\n';
  }
  ojson doc;
  doc["config_hash"] = hash;
  doc["config"] = ojson::parse(serialize_config(cfg));
  doc["cascade"] = cascade_path;
  doc["trace"] = trace;
  doc["runs"] = runs;
  const auto text = doc.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
    std::cerr << "report " << a.out << '\n';
  }
  return 0;
}

int run_dump(const Common& common, const std::string& cascade) {
  const auto cfg = effective(common);
  if (cascade.empty()) {
    std::cout << serialize_config(cfg) << "config_hash " << config_hash(cfg) << '\n';
    return 0;
  }
  const auto spec = load_cascade(cascade);
  std::cout << "classes " << spec.n_classes() << ", slow packets " << spec.n_slow_packets() << '\n';
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const auto& st = spec.stages[i];
    std::cout << stage_name(st.role) << ": " << profile_id(st.model->family(), st.model->packet_depth())
              << ", features " << (st.mask ? std::to_string(st.mask->kept.size()) : std::string("all"));
    if (i + 1 < spec.stages.size()) {
      std::cout << ", escalates via " << policy_kind_name(st.policy.kind) << " at portion " << fmt(st.policy.portion);
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast-slow cascade classifier for network flows"};
  app.require_subcommand(1);
  int code = 0;

  Common c_synth;
  std::string synth_dir, synth_name = "synthetic";
  SyntheticConfig sc;
  auto* synth = app.add_subcommand("synth", "write a labeled synthetic capture");
  add_common(synth, c_synth);
  synth->add_option("--out-dir", synth_dir, "output directory");
  synth->add_option("--name", synth_name, "file stem");
  synth->add_option("--flows", sc.n_flows, "number of flows")->check(CLI::PositiveNumber);
  synth->add_option("--classes", sc.n_classes, "number of classes")->check(CLI::Range(2, 16));
  synth->add_option("--difficulty", sc.difficulty, "share of flows without a first-packet signature")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--flow-rate", sc.flow_rate, "new flows per second")->check(CLI::PositiveNumber);
  synth->callback([&] { code = run_synth(c_synth, synth_dir, synth_name, sc); });

  Common c_craft;
  CraftArgs ca;
  auto* craft = app.add_subcommand("craft", "train and profile the model pool, place stages");
  add_common(craft, c_craft);
  craft->add_option("--trace", ca.trace, "training capture")->check(CLI::ExistingFile);
  craft->add_option("--labels", ca.labels, "labels CSV")->check(CLI::ExistingFile);
  craft->add_option("--out-dir", ca.out_dir, "where the cascade is written");
  craft->add_option("--depths", ca.depths, "comma-separated packet depths");
  craft->add_option("--families", ca.families, "comma-separated: dt,gbt");
  craft->add_option("--gbt-rounds", ca.gbt_rounds, "boosting rounds")->check(CLI::PositiveNumber);
  craft->callback([&] { code = run_craft(c_craft, ca); });

  Common c_cal;
  CalibrateArgs cal;
  auto* calibrate = app.add_subcommand("calibrate", "set escalation thresholds on a cascade");
  add_common(calibrate, c_cal);
  calibrate->add_option("--cascade", cal.cascade, "cascade.json")->check(CLI::ExistingFile);
  calibrate->add_option("--trace", cal.trace, "capture used for crafting")->check(CLI::ExistingFile);
  calibrate->add_option("--labels", cal.labels, "labels CSV")->check(CLI::ExistingFile);
  calibrate->add_option("--out-dir", cal.out_dir, "defaults to the cascade's directory");
  calibrate->add_option("--mode", cal.mode, "pareto_knee, target_portion or target_f1");
  calibrate->add_option("--target", cal.target, "portion or F1 target");
  calibrate->add_option("--metric", cal.metric, "lc or entropy");
  calibrate->add_option("--sweep-csv", cal.sweep_csv, "write policy curves per edge");
  calibrate->callback([&] { code = run_calibrate(c_cal, cal); });

  Common c_serve;
  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "classify the flows of a capture");
  add_common(serve, c_serve);
  serve->add_option("--cascade", sa.cascade, "cascade.json")->check(CLI::ExistingFile);
  serve->add_option("--pcap", sa.pcap, "input capture")->check(CLI::ExistingFile);
  serve->add_option("--labels", sa.labels, "labels CSV for scoring")->check(CLI::ExistingFile);
  serve->add_option("--consumers", sa.consumers, "worker threads")->check(CLI::Range(1, 1024));
  serve->add_option("--speed", sa.speed, "replay speed; 0 as fast as possible")->check(CLI::NonNegativeNumber);
  serve->add_option("--out", sa.out, "per-flow outcomes CSV");
  serve->callback([&] { code = run_serve(c_serve, sa); });

  Common c_bench;
  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "replay a labeled capture at several flow rates");
  add_common(bench, c_bench);
  bench->add_option("--cascade", ba.cascade, "cascade.json")->check(CLI::ExistingFile);
  bench->add_option("--trace", ba.trace, "capture to replay")->check(CLI::ExistingFile);
  bench->add_option("--labels", ba.labels, "labels CSV")->check(CLI::ExistingFile);
  bench->add_option("--rates", ba.rates, "comma-separated new flows per second");
  bench->add_option("--consumers", ba.consumers, "worker threads")->check(CLI::Range(1, 1024));
  bench->add_option("--speed", ba.speed, "time scale; 0 as fast as possible")->check(CLI::NonNegativeNumber);
  bench->add_option("--max-duration", ba.max_duration, "seconds of trace per run")->check(CLI::NonNegativeNumber);
  bench->add_option("--out", ba.out, "report JSON");
  bench->callback([&] { code = run_bench(c_bench, ba); });

  Common c_dump;
  std::string dump_cascade;
  auto* dump = app.add_subcommand("dump", "print the effective config, or a cascade summary");
  add_common(dump, c_dump);
  dump->add_option("--cascade", dump_cascade, "cascade.json")->check(CLI::ExistingFile);
  dump->callback([&] { code = run_dump(c_dump, dump_cascade); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad number in a list argument (" << e.what() << ")\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return code;
}
