#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcascade/packet_codec.hpp"
#include "flowcascade/prediction.hpp"

namespace flowcascade {

// Row-major matrix of ternary cells {-1, 0, 1}.
class TernaryMatrix {
 public:
  TernaryMatrix() = default;
  TernaryMatrix(std::size_t rows, std::size_t cols, std::int8_t fill = kAbsent)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const std::int8_t> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<std::int8_t> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::int8_t at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::int8_t& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  void append_row(std::span<const std::int8_t> values);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int8_t> data_;
};

enum class ModelFamily { DecisionTree, BoostedTrees };

std::string_view family_name(ModelFamily family);
ModelFamily parse_family(std::string_view name);  // "dt"/"DecisionTree", "gbt"/"BoostedTrees"

// Axis-aligned binary tree. Internal nodes send x[feature] <= threshold to
// the left child; leaves index into leaf_values with a fixed payload width
// (class probabilities for a decision tree, one score for a boosting tree).
struct Tree {
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t leaf = -1;
  };

  std::vector<Node> nodes;
  std::vector<double> leaf_values;
  int payload_width = 1;
  int target_class = -1;  // boosting: class whose score this tree adds to

  // x is read with right-padding: positions past x.size() read as -1.
  std::span<const double> evaluate(std::span<const std::int8_t> x) const;
  std::size_t leaf_count() const { return leaf_values.size() / static_cast<std::size_t>(payload_width); }
};

class ClassifierModel {
 public:
  ClassifierModel(ModelFamily family, int n_classes, int packet_depth, std::vector<Tree> trees,
                  double learning_rate = 0.0);

  ModelFamily family() const { return family_; }
  int n_classes() const { return n_classes_; }
  int packet_depth() const { return packet_depth_; }
  std::size_t input_width() const { return kPacketCells * static_cast<std::size_t>(packet_depth_); }
  double learning_rate() const { return learning_rate_; }
  const std::vector<Tree>& trees() const { return trees_; }

  // Inputs shorter than input_width are right-padded with -1; longer
  // inputs raise ModelError.
  Prediction predict(std::span<const std::int8_t> x) const;
  void predict_proba(std::span<const std::int8_t> x, std::span<double> out) const;

  // Largest feature index referenced by any tree, or -1 for constant models.
  std::int64_t max_feature() const;

 private:
  ModelFamily family_;
  int n_classes_;
  int packet_depth_;
  double learning_rate_;
  std::vector<Tree> trees_;
};

struct DecisionTreeConfig {
  int min_samples_leaf = 15;
  int max_depth = -1;  // unlimited
  bool operator==(const DecisionTreeConfig&) const = default;
};

struct BoostedTreesConfig {
  double learning_rate = 0.03;
  int num_leaves = 128;
  double feature_fraction = 0.9;
  int min_data_in_leaf = 3;
  int n_rounds = 100;
  double min_sum_hessian_in_leaf = 1e-3;
  double lambda_l2 = 0.0;
  std::uint64_t seed = 0;
  bool operator==(const BoostedTreesConfig&) const = default;
};

struct BoostedTrainingTrace {
  std::vector<double> train_logloss;  // index r = loss after r rounds
};

// columns restricts training to a subset of X's columns (e.g. a pruning
// mask); empty means all. Trees always refer to original column indices,
// so the model consumes the full-width vector. n_classes = 0 infers it
// from the labels. X.cols() must be a positive multiple of 1024.
ClassifierModel train_decision_tree(const TernaryMatrix& X, std::span<const int> y, const DecisionTreeConfig& cfg,
                                    int n_classes = 0, std::span<const std::size_t> columns = {});

ClassifierModel train_boosted_trees(const TernaryMatrix& X, std::span<const int> y, const BoostedTreesConfig& cfg,
                                    int n_classes = 0, std::span<const std::size_t> columns = {},
                                    BoostedTrainingTrace* trace = nullptr);

// Multiclass log-loss gradient with respect to raw scores: softmax - onehot.
std::vector<double> softmax(std::span<const double> scores);
std::vector<double> logloss_gradient(std::span<const double> scores, int label);
double logloss(std::span<const double> scores, int label);

// JSON model file. Schema:
// {"format_version": 1, "family": "DecisionTree"|"BoostedTrees",
//  "n_classes": K, "packet_depth": D, "learning_rate": r,
//  "trees": [{"class": k, "nodes": [{"feature": f, "threshold": t,
//             "left": i, "right": j} | {"leaf": [v, ...]}, ...]}]}
// Node 0 is the root; children always follow their parent.
inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(std::string_view text);
void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);

// CSV training data: "label,cell_0,...,cell_{1024*depth-1}" with an
// optional header line.
struct LabeledMatrix {
  TernaryMatrix X;
  std::vector<int> y;
};

LabeledMatrix read_training_csv(const std::string& path);

}  // namespace flowcascade
