#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vulstyle/node_kind.hpp"
#include "vulstyle/syntax_tree.hpp"

namespace vulstyle {

/// The fixed, ordered stylometry feature universe.
const std::array<NodeKind, kFeatureCount>& feature_universe();

/// Per-function occurrence counts over the feature universe.
struct CStyleVector {
  std::array<std::uint64_t, kFeatureCount> counts{};
  std::string origin;

  std::uint64_t count(NodeKind feature) const;

  /// Builds a vector from name -> count pairs. Throws Error(invalid_argument)
  /// for names outside the universe.
  static CStyleVector from_counts(const std::map<std::string, std::uint64_t>& counts, std::string origin = {});

  bool operator==(const CStyleVector&) const = default;
};

/// `KIND=COUNT` tokens for the non-zero features, in universe order.
struct CStyleAnnotation {
  std::vector<std::string> tokens;

  std::string to_string() const;
  bool operator==(const CStyleAnnotation&) const = default;
};

CStyleVector extract_features(const SyntaxTree& tree, std::string origin = {});
CStyleAnnotation to_annotation(const CStyleVector& vector);
/// Inverse of to_annotation; throws Error(invalid_argument) on malformed tokens.
CStyleVector parse_annotation(const CStyleAnnotation& annotation);

struct FeatureMatrix {
  std::vector<std::string> ids;
  std::vector<std::array<std::uint64_t, kFeatureCount>> rows;

  std::array<std::uint64_t, kFeatureCount> column_sums() const;
  /// Comma-separated text: header `id,<universe...>`, then one row per record.
  std::string to_csv() const;
};

/// Throws Error(invalid_argument) for an empty corpus.
FeatureMatrix feature_matrix(const std::vector<CStyleVector>& vectors);

}  // namespace vulstyle
