#pragma once

// Binary split candidates over a ternary training matrix, laid out as
// row-major 0/-1 masks so histogram accumulation is a streaming pass.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flowcascade/models.hpp"

namespace flowcascade::detail {

struct SplitCandidate {
  std::size_t column;       // original column index
  std::size_t column_slot;  // position in the training column list
  double threshold;         // -0.5 or 0.5
};

class SplitDesign {
 public:
  // Mask bit set means the row goes to the right child (x > threshold).
  // Candidates whose partition is constant over the rows are omitted;
  // a column seen only as {-1, 1} keeps a single candidate.
  SplitDesign(const TernaryMatrix& X, std::span<const std::size_t> columns);

  std::size_t n_candidates() const { return candidates_.size(); }
  std::size_t stride() const { return stride_; }
  std::size_t n_columns() const { return n_columns_; }
  const std::vector<SplitCandidate>& candidates() const { return candidates_; }
  const std::int8_t* mask_row(std::size_t r) const { return masks_.data() + r * stride_; }
  bool goes_right(std::size_t r, std::size_t cand) const { return masks_[r * stride_ + cand] != 0; }

 private:
  std::vector<SplitCandidate> candidates_;
  std::vector<std::int8_t> masks_;
  std::size_t stride_ = 0;
  std::size_t n_columns_ = 0;
};

std::vector<std::size_t> resolve_columns(const TernaryMatrix& X, std::span<const std::size_t> columns);
int resolve_classes(std::span<const int> y, int n_classes);
void check_training_input(const TernaryMatrix& X, std::span<const int> y);

}  // namespace flowcascade::detail
