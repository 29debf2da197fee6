#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "flowcascade/error.hpp"
#include "flowcascade/models.hpp"
#include "flowcascade/simd/kernels.hpp"
#include "split_design.hpp"

namespace flowcascade {
namespace {

using detail::SplitDesign;

struct Histogram {
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<std::int32_t> count;

  explicit Histogram(std::size_t n) : grad(n, 0.0), hess(n, 0.0), count(n, 0) {}

  void subtract_from(const Histogram& parent) {
    for (std::size_t j = 0; j < grad.size(); ++j) {
      grad[j] = parent.grad[j] - grad[j];
      hess[j] = parent.hess[j] - hess[j];
      count[j] = parent.count[j] - count[j];
    }
  }
};

struct SplitChoice {
  std::int64_t candidate = -1;
  double gain = 0.0;
};

struct Leaf {
  std::vector<std::uint32_t> rows;
  Histogram hist;
  double grad = 0.0;
  double hess = 0.0;
  std::int32_t node = 0;
  SplitChoice best;
};

class TreeGrower {
 public:
  TreeGrower(const SplitDesign& design, const BoostedTreesConfig& cfg, std::span<const double> grad,
             std::span<const double> hess, std::vector<char> eligible)
      : design_(design), cfg_(cfg), grad_(grad), hess_(hess), eligible_(std::move(eligible)) {}

  // Grows one regression tree leaf-wise and returns it together with the
  // per-row leaf assignment (for score updates).
  Tree grow(std::size_t n_rows, std::vector<std::int32_t>& row_leaf) {
    Tree tree;
    tree.payload_width = 1;
    std::vector<Leaf> leaves;
    {
      Leaf root{{}, Histogram(design_.stride()), 0.0, 0.0, 0, {}};
      root.rows.resize(n_rows);
      std::iota(root.rows.begin(), root.rows.end(), 0U);
      build_histogram(root);
      tree.nodes.emplace_back();
      root.best = find_best(root);
      leaves.push_back(std::move(root));
    }

    while (static_cast<int>(leaves.size()) < cfg_.num_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (leaves[i].best.candidate < 0) continue;
        if (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain) pick = i;
      }
      if (pick == leaves.size()) break;

      Leaf parent = std::move(leaves[pick]);
      const auto cand = static_cast<std::size_t>(parent.best.candidate);
      const auto& split = design_.candidates()[cand];
      Leaf left{{}, Histogram(0), 0.0, 0.0, 0, {}};
      Leaf right{{}, Histogram(0), 0.0, 0.0, 0, {}};
      for (std::uint32_t r : parent.rows) (design_.goes_right(r, cand) ? right : left).rows.push_back(r);

      Leaf& small = left.rows.size() <= right.rows.size() ? left : right;
      Leaf& large = left.rows.size() <= right.rows.size() ? right : left;
      small.hist = Histogram(design_.stride());
      build_histogram(small);
      large.hist = Histogram(design_.stride());
      large.hist.grad = small.hist.grad;
      large.hist.hess = small.hist.hess;
      large.hist.count = small.hist.count;
      large.hist.subtract_from(parent.hist);
      large.grad = 0.0;
      large.hess = 0.0;
      for (std::uint32_t r : large.rows) {
        large.grad += grad_[r];
        large.hess += hess_[r];
      }

      Tree::Node& node = tree.nodes[static_cast<std::size_t>(parent.node)];
      node.feature = static_cast<std::int32_t>(split.column);
      node.threshold = split.threshold;
      node.left = static_cast<std::int32_t>(tree.nodes.size());
      node.right = node.left + 1;
      left.node = node.left;
      right.node = node.right;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();

      left.best = find_best(left);
      right.best = find_best(right);
      leaves[pick] = std::move(left);
      leaves.push_back(std::move(right));
    }

    for (const Leaf& leaf : leaves) {
      const double denom = leaf.hess + cfg_.lambda_l2;
      const double value = denom > 0.0 ? -leaf.grad / denom * cfg_.learning_rate : 0.0;
      Tree::Node& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
      node.leaf = static_cast<std::int32_t>(tree.leaf_values.size());
      tree.leaf_values.push_back(value);
      for (std::uint32_t r : leaf.rows) row_leaf[r] = node.leaf;
    }
    return tree;
  }

 private:
  void build_histogram(Leaf& leaf) const {
    const auto& k = simd::kernels();
    const std::size_t n_cand = design_.n_candidates();
    leaf.grad = 0.0;
    leaf.hess = 0.0;
    for (std::uint32_t r : leaf.rows) {
      k.accumulate_grad_hess(design_.mask_row(r), n_cand, grad_[r], hess_[r], leaf.hist.grad.data(),
                             leaf.hist.hess.data(), leaf.hist.count.data());
      leaf.grad += grad_[r];
      leaf.hess += hess_[r];
    }
  }

  SplitChoice find_best(const Leaf& leaf) const {
    SplitChoice best;
    const auto n = static_cast<std::int64_t>(leaf.rows.size());
    if (n < 2 * static_cast<std::int64_t>(cfg_.min_data_in_leaf)) return best;
    const double lambda = cfg_.lambda_l2;
    const double parent_score = leaf.grad * leaf.grad / (leaf.hess + lambda);
    const auto& cands = design_.candidates();
    for (std::size_t c = 0; c < cands.size(); ++c) {
      if (!eligible_[cands[c].column_slot]) continue;
      const std::int64_t n_right = leaf.hist.count[c];
      const std::int64_t n_left = n - n_right;
      if (n_right < cfg_.min_data_in_leaf || n_left < cfg_.min_data_in_leaf) continue;
      const double g_right = leaf.hist.grad[c];
      const double h_right = leaf.hist.hess[c];
      const double g_left = leaf.grad - g_right;
      const double h_left = leaf.hess - h_right;
      if (h_right < cfg_.min_sum_hessian_in_leaf || h_left < cfg_.min_sum_hessian_in_leaf) continue;
      const double gain =
          g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) - parent_score;
      if (gain > best.gain) {
        best.gain = gain;
        best.candidate = static_cast<std::int64_t>(c);
      }
    }
    return best;
  }

  const SplitDesign& design_;
  const BoostedTreesConfig& cfg_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  std::vector<char> eligible_;
};

}  // namespace

ClassifierModel train_boosted_trees(const TernaryMatrix& X, std::span<const int> y, const BoostedTreesConfig& cfg,
                                    int n_classes, std::span<const std::size_t> columns,
                                    BoostedTrainingTrace* trace) {
  detail::check_training_input(X, y);
  if (cfg.n_rounds < 0 || cfg.num_leaves < 2 || cfg.min_data_in_leaf < 1 || !(cfg.learning_rate > 0.0) ||
      !(cfg.feature_fraction > 0.0 && cfg.feature_fraction <= 1.0)) {
    throw ValidationError("invalid boosted-trees configuration");
  }
  const int k = detail::resolve_classes(y, n_classes);
  const auto cols = detail::resolve_columns(X, columns);
  const SplitDesign design(X, cols);
  const std::size_t n = X.rows();
  const auto kc = static_cast<std::size_t>(k);

  std::vector<double> scores(n * kc, 0.0);
  std::vector<double> proba(n * kc, 0.0);
  std::vector<double> grad(n), hess(n);
  std::vector<std::int32_t> row_leaf(n, 0);
  std::vector<Tree> trees;
  std::mt19937_64 rng(cfg.seed);
  // LightGBM-style multiclass hessian scaling.
  const double hess_factor = k > 1 ? static_cast<double>(k) / static_cast<double>(k - 1) : 1.0;
  const auto n_sampled =
      static_cast<std::size_t>(std::ceil(cfg.feature_fraction * static_cast<double>(cols.size()) - 1e-12));

  auto refresh = [&]() {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::span<const double> s(scores.data() + i * kc, kc);
      const auto p = softmax(s);
      std::copy(p.begin(), p.end(), proba.begin() + static_cast<std::ptrdiff_t>(i * kc));
      loss += logloss(s, y[i]);
    }
    if (trace != nullptr) trace->train_logloss.push_back(loss / static_cast<double>(n));
  };
  refresh();

  std::vector<std::size_t> slots(cols.size());
  for (int round = 0; round < cfg.n_rounds; ++round) {
    for (std::size_t cls = 0; cls < kc; ++cls) {
      std::iota(slots.begin(), slots.end(), std::size_t{0});
      std::vector<char> eligible(cols.size(), 0);
      for (std::size_t i = 0; i < n_sampled && i < slots.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
        std::swap(slots[i], slots[pick(rng)]);
        eligible[slots[i]] = 1;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double p = proba[i * kc + cls];
        grad[i] = p - (static_cast<std::size_t>(y[i]) == cls ? 1.0 : 0.0);
        hess[i] = hess_factor * p * (1.0 - p);
      }
      TreeGrower grower(design, cfg, grad, hess, std::move(eligible));
      Tree tree = grower.grow(n, row_leaf);
      tree.target_class = static_cast<int>(cls);
      for (std::size_t i = 0; i < n; ++i) {
        scores[i * kc + cls] += tree.leaf_values[static_cast<std::size_t>(row_leaf[i])];
      }
      trees.push_back(std::move(tree));
    }
    refresh();
  }
  return ClassifierModel(ModelFamily::BoostedTrees, k, static_cast<int>(X.cols() / kPacketCells), std::move(trees),
                         cfg.learning_rate);
}

}  // namespace flowcascade
