#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowcascade/error.hpp"
#include "flowcascade/models.hpp"

namespace flowcascade {
namespace {

using nlohmann::json;

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    if (n.feature < 0) {
      const auto off = static_cast<std::size_t>(n.leaf) * static_cast<std::size_t>(tree.payload_width);
      json leaf = json::array();
      for (int i = 0; i < tree.payload_width; ++i) leaf.push_back(tree.leaf_values[off + static_cast<std::size_t>(i)]);
      nodes.push_back({{"leaf", std::move(leaf)}});
    } else {
      nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  return {{"class", tree.target_class}, {"nodes", std::move(nodes)}};
}

double finite(const json& v, const char* what) {
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ModelError(std::string("non-finite ") + what + " in model file");
  return d;
}

Tree tree_from_json(const json& j, ModelFamily family, int n_classes, std::size_t input_width) {
  Tree tree;
  tree.payload_width = family == ModelFamily::DecisionTree ? n_classes : 1;
  tree.target_class = j.at("class").get<int>();
  if (family == ModelFamily::BoostedTrees && (tree.target_class < 0 || tree.target_class >= n_classes)) {
    throw ModelError("boosting tree class out of range");
  }
  const auto& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) throw ModelError("tree without nodes");
  const auto count = static_cast<std::int64_t>(nodes.size());
  for (std::int64_t i = 0; i < count; ++i) {
    const json& n = nodes[static_cast<std::size_t>(i)];
    Tree::Node node;
    if (n.contains("leaf")) {
      const auto& leaf = n.at("leaf");
      if (!leaf.is_array() || static_cast<int>(leaf.size()) != tree.payload_width) {
        throw ModelError("leaf payload has wrong width");
      }
      node.leaf = static_cast<std::int32_t>(tree.leaf_count());
      for (const auto& v : leaf) {
        const double d = finite(v, "leaf value");
        if (family == ModelFamily::DecisionTree && d < 0.0) throw ModelError("negative leaf probability");
        tree.leaf_values.push_back(d);
      }
    } else {
      node.feature = n.at("feature").get<std::int32_t>();
      node.threshold = finite(n.at("threshold"), "threshold");
      node.left = n.at("left").get<std::int32_t>();
      node.right = n.at("right").get<std::int32_t>();
      if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= input_width) {
        throw ModelError("split feature outside the model input width");
      }
      if (node.left <= i || node.right <= i || node.left >= count || node.right >= count) {
        throw ModelError("child index must follow its parent and stay in range");
      }
    }
    tree.nodes.push_back(node);
  }
  return tree;
}

}  // namespace

std::string model_to_json(const ClassifierModel& model) {
  json trees = json::array();
  for (const Tree& t : model.trees()) trees.push_back(tree_to_json(t));
  json j = {{"format_version", kModelFormatVersion},
            {"family", family_name(model.family())},
            {"n_classes", model.n_classes()},
            {"packet_depth", model.packet_depth()},
            {"learning_rate", model.learning_rate()},
            {"trees", std::move(trees)}};
  return j.dump();
}

ClassifierModel model_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ModelError("unsupported model format_version " + std::to_string(version));
    }
    const ModelFamily family = parse_family(j.at("family").get<std::string>());
    const int n_classes = j.at("n_classes").get<int>();
    const int depth = j.at("packet_depth").get<int>();
    if (n_classes < 1 || depth < 1) throw ModelError("n_classes and packet_depth must be positive");
    const double lr = j.contains("learning_rate") ? finite(j.at("learning_rate"), "learning_rate") : 0.0;
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) {
      trees.push_back(tree_from_json(t, family, n_classes, kPacketCells * static_cast<std::size_t>(depth)));
    }
    return ClassifierModel(family, n_classes, depth, std::move(trees), lr);
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed model file: ") + e.what());
  } catch (const ValidationError& e) {
    throw ModelError(e.what());
  }
}

void save_model(const ClassifierModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ModelError("cannot write model file '" + path + "'");
  out << model_to_json(model);
  if (!out) throw ModelError("failed writing model file '" + path + "'");
}

ClassifierModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

LabeledMatrix read_training_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open training CSV '" + path + "'");
  LabeledMatrix out;
  std::string line;
  std::vector<std::int8_t> cells;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("label", 0) == 0) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    int label = 0;
    try {
      label = std::stoi(field);
    } catch (const std::exception&) {
      throw ValidationError("training CSV line " + std::to_string(line_no) + ": bad label");
    }
    cells.clear();
    while (std::getline(ss, field, ',')) {
      if (field == "-1") {
        cells.push_back(-1);
      } else if (field == "0") {
        cells.push_back(0);
      } else if (field == "1") {
        cells.push_back(1);
      } else {
        throw ValidationError("training CSV line " + std::to_string(line_no) + ": cell outside {-1,0,1}");
      }
    }
    if (cells.empty() || cells.size() % kPacketCells != 0) {
      throw ValidationError("training CSV line " + std::to_string(line_no) + ": width is not a multiple of 1024");
    }
    if (out.X.rows() > 0 && cells.size() != out.X.cols()) {
      throw ValidationError("training CSV line " + std::to_string(line_no) + ": inconsistent width");
    }
    out.X.append_row(cells);
    out.y.push_back(label);
  }
  return out;
}

}  // namespace flowcascade
