#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowcascade/crafting.hpp"
#include "flowcascade/flow_state.hpp"

namespace flowcascade {

// Everything a craft/calibrate/serve/bench run reads. The file format is
// JSON; see README for the keys, defaults and ranges.
struct PipelineConfig {
  struct Paths {
    std::string cascade;  // cascade.json from calibrate
    std::string trace;    // capture to craft from or replay
    std::string labels;   // sidecar labels for the trace
    std::string out_dir;  // empty: the working directory
    bool operator==(const Paths&) const = default;
  };
  struct Crafting {
    std::vector<ModelFamily> families{ModelFamily::DecisionTree, ModelFamily::BoostedTrees};
    std::vector<int> depths{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double train_fraction = 0.5;
    double validation_fraction = 0.1;
    PoolConfig pool;
    PlacementConfig placement;
    bool operator==(const Crafting&) const = default;
  };
  struct Harness {
    std::vector<double> rates;  // new flows per second; empty replays at the capture's rate
    int consumers = 1;
    double speed = 1.0;  // 0 replays as fast as possible
    double max_duration_s = 0.0;
    bool operator==(const Harness&) const = default;
  };

  std::uint64_t seed = 1;  // drives the split, boosting and Random policies
  Paths paths;
  FlowStateConfig flow_state;
  Crafting crafting;
  CalibrationConfig assignment;
  Harness harness;

  bool operator==(const PipelineConfig&) const = default;
};

// Reads and validates a config file. Absent keys take their defaults;
// unknown keys, wrong types, out-of-range values and missing input files
// raise ValidationError naming the file and the dotted key. Paths given
// relative are made absolute against the config file's directory.
PipelineConfig load_config(const std::string& path);

// Same, from JSON text; `location` names it in errors and relative paths
// resolve against `base_dir`.
PipelineConfig parse_config(const std::string& json_text, const std::string& location = "<config>",
                            const std::string& base_dir = ".");

// Canonical JSON with every key present, in a fixed order.
std::string serialize_config(const PipelineConfig& cfg);

// FNV-1a 64 of the compact canonical form, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

}  // namespace flowcascade
