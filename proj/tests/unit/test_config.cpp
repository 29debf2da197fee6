#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "flowcascade/config.hpp"
#include "flowcascade/error.hpp"
#include "support.hpp"

using namespace flowcascade;
using nlohmann::json;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "t.json");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

// Random valid config text: each key present with probability 1/2.
json random_config(std::mt19937_64& rng, const std::string& existing_file) {
  auto coin = [&] { return rng() % 2 == 0; };
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto pick = [&](long long lo, long long hi) { return lo + static_cast<long long>(rng() % (hi - lo + 1)); };
  json j = json::object();
  if (coin()) j["seed"] = pick(0, 1'000'000);
  json p = json::object();
  if (coin()) p["trace"] = existing_file;
  if (coin()) p["out_dir"] = "out/run" + std::to_string(pick(0, 9));
  if (coin()) j["paths"] = p;
  json fs = json::object();
  if (coin()) fs["ttl_ms"] = pick(1, 60'000);
  if (coin()) fs["q1_capacity"] = pick(1, 100'000);
  if (coin()) fs["q2_capacity"] = pick(1, 100'000);
  if (coin()) fs["n_slow_packets"] = pick(1, 64);
  if (coin()) j["flow_state"] = fs;
  json cr = json::object();
  if (coin()) cr["families"] = coin() ? json{"gbt"} : json{"gbt", "dt"};
  if (coin()) cr["depths"] = json{pick(1, 3), pick(4, 8), pick(9, 64)};
  if (coin()) cr["gbt_rounds"] = pick(1, 500);
  if (coin()) cr["gbt_learning_rate"] = uni(0.001, 1.0);
  if (coin()) cr["f1_floor"] = uni(0.0, 1.0);
  if (coin()) cr["min_latency_ratio"] = uni(1.0, 10.0);
  if (coin()) cr["train_fraction"] = uni(0.1, 0.6);
  if (coin()) j["crafting"] = cr;
  json as = json::object();
  if (coin()) as["metric"] = coin() ? "lc" : "entropy";
  if (coin()) as["grid_step"] = uni(0.001, 0.5);
  if (coin()) {
    as["mode"] = coin() ? "target_portion" : "target_f1";
    as["target"] = uni(0.0, 1.0);
  }
  if (coin()) as["fastest_policy"] = coin() ? "PerClass" : "random";
  if (coin()) as["fast_policy"] = coin() ? "auto" : "default";
  if (coin()) j["assignment"] = as;
  json h = json::object();
  if (coin()) h["rates"] = json{uni(1, 1000), uni(1, 1e5)};
  if (coin()) h["consumers"] = pick(1, 64);
  if (coin()) h["speed"] = coin() ? 0.0 : uni(0.1, 10);
  if (coin()) j["harness"] = h;
  return j;
}

}  // namespace

TEST_CASE("empty config gives the documented defaults") {
  const auto c = parse_config("{}");
  CHECK(c == PipelineConfig{});
  CHECK(parse_config("") == PipelineConfig{});
  CHECK(c.flow_state.ttl_us == 10'000'000);
  CHECK(c.flow_state.n_slow_packets == 10);
  CHECK(c.crafting.pool.gbt.learning_rate == 0.03);
  CHECK(c.crafting.pool.gbt.num_leaves == 128);
  CHECK(c.crafting.pool.dt.min_samples_leaf == 15);
  CHECK(c.assignment.metric == UncertaintyMetric::LeastConfidence);
  CHECK(c.assignment.mode == SelectionMode::ParetoKnee);
  CHECK(c.assignment.grid_step == 0.01);
  CHECK(c.harness.consumers == 1);
  CHECK(c.seed == 1);
  CHECK_FALSE(c.assignment.fastest_auto);
  CHECK(parse_config(R"({"assignment": {"fastest_policy": "auto"}})").assignment.fastest_auto);
}

TEST_CASE("errors name the offending key") {
  CHECK(error_of(R"({"flow_state": {"ttl_ms": -1}})").find("ttl_ms") != std::string::npos);
  CHECK(error_of(R"({"flow_state": {"ttl_ms": -1}})").find("t.json") != std::string::npos);
  CHECK(error_of(R"({"flow_state": {"ttl": 5}})").find("flow_state.ttl") != std::string::npos);
  CHECK(error_of(R"({"bogus": 1})").find("bogus") != std::string::npos);
  CHECK(error_of(R"({"flow_state": {"ttl_ms": 2.5}})").find("integer") != std::string::npos);
  CHECK(error_of(R"({"assignment": {"metric": "margin"}})").find("assignment.metric") != std::string::npos);
  CHECK(error_of(R"({"assignment": {"fast_policy": "Oracle"}})").find("fast_policy") != std::string::npos);
  CHECK(error_of(R"({"assignment": {"mode": "target_f1"}})").find("assignment.target") != std::string::npos);
  CHECK(error_of(R"({"crafting": {"depths": [1, 1]}})").find("crafting.depths") != std::string::npos);
  CHECK(error_of(R"({"crafting": {"families": ["rf"]}})").find("crafting.families") != std::string::npos);
  CHECK(error_of(R"({"harness": {"consumers": 0}})").find("harness.consumers") != std::string::npos);
  CHECK(error_of(R"({"harness": {"rates": [100, -3]}})").find("harness.rates") != std::string::npos);
  CHECK(error_of(R"({"paths": {"trace": "/definitely/not/here.pcap"}})").find("paths.trace") != std::string::npos);
  CHECK(error_of(R"({"paths": 3})").find("paths") != std::string::npos);
  CHECK(error_of("{not json").find("JSON") != std::string::npos);
  CHECK_THROWS_AS(load_config("/no/such/config.json"), ValidationError);
}

TEST_CASE("relative paths resolve against the config file directory") {
  const auto dir = fctest::temp_dir("config");
  std::filesystem::create_directories(dir + "/sub");
  std::ofstream(dir + "/sub/trace.pcap") << "x";
  std::ofstream(dir + "/c.json") << R"({"paths": {"trace": "sub/trace.pcap", "out_dir": "results"}})";
  const auto c = load_config(dir + "/c.json");
  CHECK(std::filesystem::equivalent(c.paths.trace, dir + "/sub/trace.pcap"));
  CHECK(std::filesystem::path(c.paths.out_dir).is_absolute());
}

TEST_CASE("load(serialize(load(c))) equals load(c) on generated configs") {
  const auto dir = fctest::temp_dir("config");
  const std::string file = dir + "/exists.bin";
  std::ofstream(file) << "x";
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const json text = random_config(rng, file);
    const std::string path = dir + "/gen.json";
    std::ofstream(path) << text.dump();
    const auto first = load_config(path);
    const std::string round = dir + "/round.json";
    std::ofstream(round) << serialize_config(first);
    const auto second = load_config(round);
    CHECK(second == first);
    CHECK(config_hash(second) == config_hash(first));
  }
}

TEST_CASE("the hash changes with any knob and ignores key order") {
  const auto base = parse_config("{}");
  CHECK(config_hash(base).size() == 16);
  CHECK(config_hash(parse_config(R"({"flow_state": {"ttl_ms": 9999}})")) != config_hash(base));
  CHECK(config_hash(parse_config(R"({"seed": 2})")) != config_hash(base));
  CHECK(config_hash(parse_config(R"({"harness": {"consumers": 2, "speed": 0}})")) ==
        config_hash(parse_config(R"({"harness": {"speed": 0, "consumers": 2}})")));

  // FNV-1a 64 reference values.
  auto fnv = [](const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
    return h;
  };
  CHECK(fnv("") == 0xcbf29ce484222325ULL);
  CHECK(fnv("a") == 0xaf63dc4c8601ec8cULL);
  char expect[17];
  // The canonical form keeps insertion order, so reparse with ordered_json.
  std::snprintf(expect, sizeof expect, "%016llx",
                static_cast<unsigned long long>(fnv(nlohmann::ordered_json::parse(serialize_config(base)).dump())));
  CHECK(config_hash(base) == std::string(expect));
}
