#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowcascade/assignment.hpp"
#include "flowcascade/feature_mask.hpp"
#include "flowcascade/flow_state.hpp"
#include "flowcascade/models.hpp"

namespace flowcascade {

std::string_view stage_name(Stage s);  // "fastest", "fast", "slow"
Stage parse_stage(std::string_view name);
DecidedBy decided_by_for(Stage s);

struct StageSpec {
  Stage role = Stage::Fastest;
  std::shared_ptr<const ClassifierModel> model;
  std::optional<FeatureMask> mask;
  ThresholdPolicy policy = no_escalation_policy();  // edge to the next stage; unused on the last one
};

// Ordered fastest -> fast -> slow. Fastest and fast read the first packet
// only; slow reads its model's packet depth. A lone slow stage is the
// single-model fallback.
struct CascadeSpec {
  std::vector<StageSpec> stages;

  int n_classes() const;
  int n_slow_packets() const;  // slow model depth, 1 without a slow stage
  bool has(Stage s) const;
  const StageSpec& stage(Stage s) const;
  StageSpec& stage(Stage s);
  // Throws ValidationError on a broken structure.
  void validate() const;
};

// Cascade file: {"format_version": 1, "n_slow_packets": N, "stages": [{"role":
// "fastest", "model": path, "mask": path?, "policy": path?}, ...]}. Paths
// are relative to the cascade file.
inline constexpr int kCascadeFormatVersion = 1;
CascadeSpec load_cascade(const std::string& path);
// Writes the cascade plus one model/mask/policy file per stage into dir.
void save_cascade(const CascadeSpec& spec, const std::string& dir, const std::string& spec_name = "cascade.json");

}  // namespace flowcascade
