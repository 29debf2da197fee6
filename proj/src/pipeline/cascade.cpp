#include "flowcascade/cascade.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowcascade/error.hpp"

namespace flowcascade {

namespace fs = std::filesystem;

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Fastest:
      return "fastest";
    case Stage::Fast:
      return "fast";
    case Stage::Slow:
      return "slow";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  if (name == "fastest") return Stage::Fastest;
  if (name == "fast") return Stage::Fast;
  if (name == "slow") return Stage::Slow;
  throw ValidationError("unknown stage role '" + std::string(name) + "'");
}

DecidedBy decided_by_for(Stage s) {
  switch (s) {
    case Stage::Fastest:
      return DecidedBy::Fastest;
    case Stage::Fast:
      return DecidedBy::Fast;
    case Stage::Slow:
      return DecidedBy::Slow;
  }
  return DecidedBy::Dropped;
}

int CascadeSpec::n_classes() const { return stages.empty() ? 0 : stages.front().model->n_classes(); }

int CascadeSpec::n_slow_packets() const { return has(Stage::Slow) ? stage(Stage::Slow).model->packet_depth() : 1; }

bool CascadeSpec::has(Stage s) const {
  for (const auto& st : stages) {
    if (st.role == s) return true;
  }
  return false;
}

const StageSpec& CascadeSpec::stage(Stage s) const {
  for (const auto& st : stages) {
    if (st.role == s) return st;
  }
  throw ValidationError("cascade has no " + std::string(stage_name(s)) + " stage");
}

StageSpec& CascadeSpec::stage(Stage s) {
  return const_cast<StageSpec&>(static_cast<const CascadeSpec&>(*this).stage(s));
}

void CascadeSpec::validate() const {
  if (stages.empty()) throw ValidationError("cascade: no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& st = stages[i];
    if (!st.model) throw ValidationError("cascade: stage " + std::to_string(i) + " has no model");
    if (i > 0 && static_cast<int>(st.role) <= static_cast<int>(stages[i - 1].role)) {
      throw ValidationError("cascade: stages must be ordered fastest, fast, slow without repeats");
    }
    if (st.role != Stage::Slow && st.model->packet_depth() != 1) {
      throw ValidationError("cascade: the " + std::string(stage_name(st.role)) +
                            " stage reads the first packet only and needs a depth-1 model");
    }
    if (st.model->n_classes() != stages.front().model->n_classes()) {
      throw ValidationError("cascade: all stages must share n_classes");
    }
    if (st.mask && st.mask->width != st.model->input_width()) {
      throw ValidationError("cascade: mask width does not match the " + std::string(stage_name(st.role)) +
                            " model input width");
    }
    if (i + 1 < stages.size() && st.policy.kind == PolicyKind::Oracle) {
      throw ValidationError("cascade: the Oracle policy cannot be served");
    }
  }
  if (has(Stage::Fast) && !has(Stage::Fastest)) throw ValidationError("cascade: a fast stage needs a fastest stage");
}

CascadeSpec load_cascade(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read cascade spec '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return (fs::path(p).is_absolute() ? fs::path(p) : base / p).string(); };
  CascadeSpec spec;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format_version").get<int>() != kCascadeFormatVersion) {
      throw ValidationError("cascade spec: unsupported format_version");
    }
    for (const auto& s : j.at("stages")) {
      StageSpec st;
      st.role = parse_stage(s.at("role").get<std::string>());
      st.model = std::make_shared<const ClassifierModel>(load_model(resolve(s.at("model").get<std::string>())));
      if (s.contains("mask") && !s.at("mask").is_null()) st.mask = load_mask(resolve(s.at("mask").get<std::string>()));
      if (s.contains("policy") && !s.at("policy").is_null()) {
        st.policy = load_policy(resolve(s.at("policy").get<std::string>()));
      }
      spec.stages.push_back(std::move(st));
    }
    spec.validate();
    if (j.contains("n_slow_packets") && j.at("n_slow_packets").get<int>() != spec.n_slow_packets()) {
      throw ValidationError("cascade spec: n_slow_packets disagrees with the slow model depth");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cascade spec '" + path + "': " + e.what());
  }
  return spec;
}

void save_cascade(const CascadeSpec& spec, const std::string& dir, const std::string& spec_name) {
  spec.validate();
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["format_version"] = kCascadeFormatVersion;
  j["n_slow_packets"] = spec.n_slow_packets();
  j["stages"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const auto& st = spec.stages[i];
    const std::string stem(stage_name(st.role));
    nlohmann::ordered_json s;
    s["role"] = stem;
    s["model"] = stem + ".model.json";
    save_model(*st.model, (fs::path(dir) / (stem + ".model.json")).string());
    if (st.mask) {
      s["mask"] = stem + ".mask.json";
      save_mask(*st.mask, (fs::path(dir) / (stem + ".mask.json")).string());
    }
    if (i + 1 < spec.stages.size()) {
      s["policy"] = stem + ".policy.json";
      save_policy(st.policy, (fs::path(dir) / (stem + ".policy.json")).string());
    }
    j["stages"].push_back(s);
  }
  std::ofstream out(fs::path(dir) / spec_name);
  if (!out) throw Error("cannot write cascade spec in '" + dir + "'");
  out << j.dump(2) << '\n';
}

}  // namespace flowcascade
