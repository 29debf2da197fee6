#include <cstdint>
#include <vector>

#include "flowcascade/models.hpp"
#include "flowcascade/simd/kernels.hpp"
#include "split_design.hpp"

namespace flowcascade {
namespace {

using detail::SplitDesign;

struct Builder {
  const SplitDesign& design;
  std::span<const int> y;
  int n_classes;
  DecisionTreeConfig cfg;
  Tree tree;
  std::vector<std::int32_t> counts;  // n_classes x stride, reused per node

  std::int32_t make_leaf(const std::vector<std::int64_t>& class_counts, std::size_t n) {
    Tree::Node node;
    node.leaf = static_cast<std::int32_t>(tree.leaf_count());
    for (std::int64_t c : class_counts) {
      tree.leaf_values.push_back(static_cast<double>(c) / static_cast<double>(n));
    }
    tree.nodes.push_back(node);
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  }

  // Returns the best candidate index or -1 when no split satisfies the leaf floor.
  std::int64_t best_split(const std::vector<std::uint32_t>& rows, const std::vector<std::int64_t>& class_counts) {
    const std::size_t stride = design.stride();
    const std::size_t n_cand = design.n_candidates();
    counts.assign(static_cast<std::size_t>(n_classes) * stride, 0);
    const auto& k = simd::kernels();
    for (std::uint32_t r : rows) {
      k.accumulate_counts(design.mask_row(r), n_cand, counts.data() + static_cast<std::size_t>(y[r]) * stride);
    }
    const auto n = static_cast<std::int64_t>(rows.size());
    std::int64_t best = -1;
    double best_score = -1.0;
    for (std::size_t c = 0; c < n_cand; ++c) {
      std::int64_t n_right = 0;
      double sq_right = 0.0;
      double sq_left = 0.0;
      for (int cls = 0; cls < n_classes; ++cls) {
        const std::int64_t r = counts[static_cast<std::size_t>(cls) * stride + c];
        const std::int64_t l = class_counts[static_cast<std::size_t>(cls)] - r;
        n_right += r;
        sq_right += static_cast<double>(r) * static_cast<double>(r);
        sq_left += static_cast<double>(l) * static_cast<double>(l);
      }
      const std::int64_t n_left = n - n_right;
      if (n_right < cfg.min_samples_leaf || n_left < cfg.min_samples_leaf) continue;
      // Minimizing weighted child Gini == maximizing sum_c n_c^2 / n_child.
      const double score = sq_left / static_cast<double>(n_left) + sq_right / static_cast<double>(n_right);
      if (score > best_score) {
        best_score = score;
        best = static_cast<std::int64_t>(c);
      }
    }
    return best;
  }

  std::int32_t grow(std::vector<std::uint32_t> rows, int depth) {
    std::vector<std::int64_t> class_counts(static_cast<std::size_t>(n_classes), 0);
    for (std::uint32_t r : rows) ++class_counts[static_cast<std::size_t>(y[r])];
    int non_zero = 0;
    for (std::int64_t c : class_counts) non_zero += c > 0 ? 1 : 0;
    const bool depth_capped = cfg.max_depth >= 0 && depth >= cfg.max_depth;
    if (non_zero <= 1 || depth_capped || rows.size() < 2 * static_cast<std::size_t>(std::max(cfg.min_samples_leaf, 1))) {
      return make_leaf(class_counts, rows.size());
    }
    const std::int64_t cand = best_split(rows, class_counts);
    if (cand < 0) return make_leaf(class_counts, rows.size());

    std::vector<std::uint32_t> left, right;
    for (std::uint32_t r : rows) {
      (design.goes_right(r, static_cast<std::size_t>(cand)) ? right : left).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const auto& split = design.candidates()[static_cast<std::size_t>(cand)];
    Tree::Node node;
    node.feature = static_cast<std::int32_t>(split.column);
    node.threshold = split.threshold;
    tree.nodes.push_back(node);
    const auto self = static_cast<std::size_t>(tree.nodes.size() - 1);
    const std::int32_t l = grow(std::move(left), depth + 1);
    const std::int32_t r = grow(std::move(right), depth + 1);
    tree.nodes[self].left = l;
    tree.nodes[self].right = r;
    return static_cast<std::int32_t>(self);
  }
};

}  // namespace

ClassifierModel train_decision_tree(const TernaryMatrix& X, std::span<const int> y, const DecisionTreeConfig& cfg,
                                    int n_classes, std::span<const std::size_t> columns) {
  detail::check_training_input(X, y);
  const int k = detail::resolve_classes(y, n_classes);
  const auto cols = detail::resolve_columns(X, columns);
  const SplitDesign design(X, cols);

  Builder b{design, y, k, cfg, {}, {}};
  b.tree.payload_width = k;
  std::vector<std::uint32_t> rows(X.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint32_t>(i);
  b.grow(std::move(rows), 0);

  std::vector<Tree> trees;
  trees.push_back(std::move(b.tree));
  return ClassifierModel(ModelFamily::DecisionTree, k, static_cast<int>(X.cols() / kPacketCells), std::move(trees));
}

}  // namespace flowcascade
