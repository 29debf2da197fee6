#include "flowcascade/prediction.hpp"

#include <cmath>
#include <map>

#include "flowcascade/error.hpp"

namespace flowcascade {

Prediction make_prediction(std::vector<double> proba) {
  Prediction p;
  p.proba = std::move(proba);
  double best = -1.0;
  double entropy = 0.0;
  for (std::size_t c = 0; c < p.proba.size(); ++c) {
    const double v = p.proba[c];
    if (v > best) {
      best = v;
      p.label = static_cast<int>(c);
    }
    if (v > 0.0) entropy -= v * std::log(v);
  }
  p.uncertainty_lc = p.proba.empty() ? 0.0 : 1.0 - best;
  p.uncertainty_entropy = entropy;
  return p;
}

double uncertainty_of(const Prediction& p, UncertaintyMetric metric) {
  return metric == UncertaintyMetric::LeastConfidence ? p.uncertainty_lc : p.uncertainty_entropy;
}

std::string_view metric_name(UncertaintyMetric metric) {
  return metric == UncertaintyMetric::LeastConfidence ? "lc" : "entropy";
}

UncertaintyMetric parse_metric(std::string_view name) {
  if (name == "lc" || name == "least_confidence") return UncertaintyMetric::LeastConfidence;
  if (name == "entropy") return UncertaintyMetric::Entropy;
  throw ValidationError("unknown uncertainty metric '" + std::string(name) + "'");
}

double weighted_f1(std::span<const int> truth, std::span<const int> predicted, int n_classes) {
  if (truth.size() != predicted.size()) throw ValidationError("weighted_f1: length mismatch");
  if (truth.empty()) return 0.0;
  std::vector<double> tp(static_cast<std::size_t>(n_classes), 0.0);
  std::vector<double> fp(tp.size(), 0.0);
  std::vector<double> support(tp.size(), 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) throw ValidationError("weighted_f1: label out of range");
    support[static_cast<std::size_t>(t)] += 1.0;
    if (t == p) {
      tp[static_cast<std::size_t>(t)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    if (support[c] == 0.0) continue;
    const double fn = support[c] - tp[c];
    const double denom = 2.0 * tp[c] + fp[c] + fn;
    const double f1 = denom > 0.0 ? 2.0 * tp[c] / denom : 0.0;
    total += f1 * support[c];
  }
  return total / static_cast<double>(truth.size());
}

}  // namespace flowcascade
