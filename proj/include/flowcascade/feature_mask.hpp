#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowcascade/models.hpp"

namespace flowcascade {

// Columns of the flattened 1024*depth feature space a model may read.
struct FeatureMask {
  std::size_t width = 0;
  std::vector<std::size_t> kept;  // sorted
  std::size_t dropped_uniform = 0;
  std::size_t dropped_duplicate = 0;
};

// Drops constant columns, then keeps the lowest index of every group of
// identical columns. Throws ValidationError if every column is constant.
FeatureMask prune_features(const TernaryMatrix& X);

// Writes ABSENT into every dropped column (idempotent).
void apply_mask(const FeatureMask& mask, std::span<std::int8_t> x);

std::string mask_to_json(const FeatureMask& mask);
FeatureMask mask_from_json(std::string_view text);
void save_mask(const FeatureMask& mask, const std::string& path);
FeatureMask load_mask(const std::string& path);

}  // namespace flowcascade
