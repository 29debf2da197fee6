#pragma once

#include <span>
#include <string_view>
#include <vector>

namespace flowcascade {

// Class label, full probability vector, and both uncertainty scores.
struct Prediction {
  int label = 0;
  std::vector<double> proba;
  double uncertainty_lc = 0.0;       // 1 - max p
  double uncertainty_entropy = 0.0;  // -sum p ln p, with 0 ln 0 = 0
};

// label = argmax with ties broken toward the lowest class index.
Prediction make_prediction(std::vector<double> proba);

enum class UncertaintyMetric { LeastConfidence, Entropy };

double uncertainty_of(const Prediction& p, UncertaintyMetric metric);

std::string_view metric_name(UncertaintyMetric metric);
UncertaintyMetric parse_metric(std::string_view name);

// Support-weighted F1 over classes present in the truth vector.
double weighted_f1(std::span<const int> truth, std::span<const int> predicted, int n_classes);

}  // namespace flowcascade
