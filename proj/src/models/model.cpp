#include <algorithm>
#include <cmath>

#include "flowcascade/error.hpp"
#include "flowcascade/models.hpp"

namespace flowcascade {

void TernaryMatrix::append_row(std::span<const std::int8_t> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) throw ValidationError("TernaryMatrix::append_row: width mismatch");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

std::string_view family_name(ModelFamily family) {
  return family == ModelFamily::DecisionTree ? "DecisionTree" : "BoostedTrees";
}

ModelFamily parse_family(std::string_view name) {
  if (name == "dt" || name == "DecisionTree") return ModelFamily::DecisionTree;
  if (name == "gbt" || name == "BoostedTrees") return ModelFamily::BoostedTrees;
  throw ValidationError("unknown model family '" + std::string(name) + "'");
}

std::span<const double> Tree::evaluate(std::span<const std::int8_t> x) const {
  std::int32_t i = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const Node& n = nodes[static_cast<std::size_t>(i)];
    const auto f = static_cast<std::size_t>(n.feature);
    const double v = f < x.size() ? x[f] : kAbsent;
    i = v <= n.threshold ? n.left : n.right;
  }
  const auto leaf = static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)].leaf);
  return {leaf_values.data() + leaf * static_cast<std::size_t>(payload_width), static_cast<std::size_t>(payload_width)};
}

ClassifierModel::ClassifierModel(ModelFamily family, int n_classes, int packet_depth, std::vector<Tree> trees,
                                 double learning_rate)
    : family_(family),
      n_classes_(n_classes),
      packet_depth_(packet_depth),
      learning_rate_(learning_rate),
      trees_(std::move(trees)) {
  if (n_classes_ < 1) throw ModelError("model needs at least one class");
  if (packet_depth_ < 1) throw ModelError("packet_depth must be >= 1");
  if (family_ == ModelFamily::DecisionTree && trees_.size() != 1) {
    throw ModelError("decision tree model must hold exactly one tree");
  }
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.begin(), scores.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> logloss_gradient(std::span<const double> scores, int label) {
  auto g = softmax(scores);
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

double logloss(std::span<const double> scores, int label) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - m);
  return -(scores[static_cast<std::size_t>(label)] - m - std::log(sum));
}

void ClassifierModel::predict_proba(std::span<const std::int8_t> x, std::span<double> out) const {
  if (x.size() > input_width()) {
    throw ModelError("input width " + std::to_string(x.size()) + " exceeds model input width " +
                     std::to_string(input_width()));
  }
  if (out.size() != static_cast<std::size_t>(n_classes_)) throw ModelError("output width mismatch");
  if (family_ == ModelFamily::DecisionTree) {
    const auto leaf = trees_.front().evaluate(x);
    std::copy(leaf.begin(), leaf.end(), out.begin());
    return;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (const Tree& t : trees_) out[static_cast<std::size_t>(t.target_class)] += t.evaluate(x)[0];
  const auto p = softmax(out);
  std::copy(p.begin(), p.end(), out.begin());
}

Prediction ClassifierModel::predict(std::span<const std::int8_t> x) const {
  std::vector<double> proba(static_cast<std::size_t>(n_classes_));
  predict_proba(x, proba);
  return make_prediction(std::move(proba));
}

std::int64_t ClassifierModel::max_feature() const {
  std::int64_t m = -1;
  for (const Tree& t : trees_) {
    for (const auto& n : t.nodes) m = std::max<std::int64_t>(m, n.feature);
  }
  return m;
}

}  // namespace flowcascade
