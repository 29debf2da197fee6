#include "split_design.hpp"

#include <algorithm>
#include <numeric>

#include "flowcascade/error.hpp"

namespace flowcascade::detail {

SplitDesign::SplitDesign(const TernaryMatrix& X, std::span<const std::size_t> columns) : n_columns_(columns.size()) {
  const std::size_t rows = X.rows();
  for (std::size_t slot = 0; slot < columns.size(); ++slot) {
    const std::size_t col = columns[slot];
    bool has_neg = false, has_zero = false, has_one = false;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::int8_t v = X.at(r, col);
      has_neg |= v < 0;
      has_zero |= v == 0;
      has_one |= v > 0;
    }
    const bool low_split = has_neg && (has_zero || has_one);
    const bool high_split = has_one && (has_neg || has_zero);
    if (low_split) candidates_.push_back({col, slot, -0.5});
    if (high_split && !(low_split && !has_zero)) candidates_.push_back({col, slot, 0.5});
  }
  stride_ = (candidates_.size() + 31) / 32 * 32;
  masks_.assign(rows * stride_, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = X.row(r);
    std::int8_t* out = masks_.data() + r * stride_;
    for (std::size_t c = 0; c < candidates_.size(); ++c) {
      const auto& cand = candidates_[c];
      out[c] = row[cand.column] > cand.threshold ? std::int8_t{-1} : std::int8_t{0};
    }
  }
}

std::vector<std::size_t> resolve_columns(const TernaryMatrix& X, std::span<const std::size_t> columns) {
  if (columns.empty()) {
    std::vector<std::size_t> all(X.cols());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::vector<std::size_t> out(columns.begin(), columns.end());
  for (std::size_t c : out) {
    if (c >= X.cols()) throw ValidationError("training column index out of range");
  }
  return out;
}

int resolve_classes(std::span<const int> y, int n_classes) {
  const int max_label = *std::max_element(y.begin(), y.end());
  if (*std::min_element(y.begin(), y.end()) < 0) throw ValidationError("negative class label");
  if (n_classes == 0) return max_label + 1;
  if (max_label >= n_classes) throw ValidationError("class label exceeds n_classes");
  return n_classes;
}

void check_training_input(const TernaryMatrix& X, std::span<const int> y) {
  if (X.rows() == 0 || X.rows() != y.size()) throw ValidationError("training set must be non-empty with |X| = |y|");
  if (X.cols() == 0 || X.cols() % kPacketCells != 0) {
    throw ValidationError("training width must be a positive multiple of 1024");
  }
}

}  // namespace flowcascade::detail
