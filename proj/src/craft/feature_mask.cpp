#include "flowcascade/feature_mask.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

bool same_column(const TernaryMatrix& X, std::size_t a, std::size_t b) {
  for (std::size_t r = 0; r < X.rows(); ++r) {
    if (X.at(r, a) != X.at(r, b)) return false;
  }
  return true;
}

}  // namespace

FeatureMask prune_features(const TernaryMatrix& X) {
  if (X.rows() == 0 || X.cols() == 0) throw ValidationError("prune_features: empty matrix");
  const std::size_t cols = X.cols();
  std::vector<std::uint64_t> hash(cols, 1469598103934665603ULL);
  std::vector<char> varies(cols, 0);
  const auto first = X.row(0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto row = X.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      hash[c] = (hash[c] ^ static_cast<std::uint8_t>(row[c] + 2)) * 1099511628211ULL;
      varies[c] |= static_cast<char>(row[c] != first[c]);
    }
  }

  FeatureMask mask;
  mask.width = cols;
  // Representatives seen so far per hash, lowest index first.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> reps;
  for (std::size_t c = 0; c < cols; ++c) {
    if (!varies[c]) {
      ++mask.dropped_uniform;
      continue;
    }
    auto& bucket = reps[hash[c]];
    bool dup = false;
    for (auto rep : bucket) {
      if (same_column(X, rep, c)) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++mask.dropped_duplicate;
    } else {
      bucket.push_back(c);
      mask.kept.push_back(c);
    }
  }
  if (mask.kept.empty()) throw ValidationError("prune_features: every column is constant");
  return mask;
}

void apply_mask(const FeatureMask& mask, std::span<std::int8_t> x) {
  std::size_t k = 0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    if (k < mask.kept.size() && mask.kept[k] == c) {
      ++k;
    } else {
      x[c] = kAbsent;
    }
  }
}

std::string mask_to_json(const FeatureMask& mask) {
  nlohmann::ordered_json j;
  j["width"] = mask.width;
  j["kept_columns"] = mask.kept;
  j["dropped_uniform"] = mask.dropped_uniform;
  j["dropped_duplicate"] = mask.dropped_duplicate;
  return j.dump();
}

FeatureMask mask_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FeatureMask m;
    m.width = j.at("width").get<std::size_t>();
    m.kept = j.at("kept_columns").get<std::vector<std::size_t>>();
    m.dropped_uniform = j.value("dropped_uniform", std::size_t{0});
    m.dropped_duplicate = j.value("dropped_duplicate", std::size_t{0});
    for (std::size_t i = 0; i < m.kept.size(); ++i) {
      if (m.kept[i] >= m.width || (i > 0 && m.kept[i] <= m.kept[i - 1])) {
        throw ValidationError("feature mask: kept_columns must be sorted, unique and below width");
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("feature mask: ") + e.what());
  }
}

void save_mask(const FeatureMask& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write mask file '" + path + "'");
  out << mask_to_json(mask) << '\n';
}

FeatureMask load_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read mask file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return mask_from_json(ss.str());
}

}  // namespace flowcascade
