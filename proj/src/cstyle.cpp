#include "vulstyle/cstyle.hpp"

#include <charconv>

#include <fmt/format.h>

#include "vulstyle/error.hpp"

namespace vulstyle {

const std::array<NodeKind, kFeatureCount>& feature_universe() {
  static const std::array<NodeKind, kFeatureCount> universe = [] {
    std::array<NodeKind, kFeatureCount> u{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) u[i] = static_cast<NodeKind>(i);
    return u;
  }();
  return universe;
}

std::uint64_t CStyleVector::count(NodeKind feature) const {
  const auto index = static_cast<std::size_t>(feature);
  return index < kFeatureCount ? counts[index] : 0;
}

CStyleVector CStyleVector::from_counts(const std::map<std::string, std::uint64_t>& counts, std::string origin) {
  CStyleVector v;
  v.origin = std::move(origin);
  for (const auto& [name, value] : counts) {
    const auto kind = kind_from_name(name);
    if (!kind || static_cast<std::size_t>(*kind) >= kFeatureCount) {
      throw Error(ErrorCode::invalid_argument, fmt::format("'{}' is not a stylometry feature", name));
    }
    v.counts[static_cast<std::size_t>(*kind)] = value;
  }
  return v;
}

std::string CStyleAnnotation::to_string() const {
  std::string out;
  for (const std::string& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

CStyleVector extract_features(const SyntaxTree& tree, std::string origin) {
  CStyleVector v;
  v.origin = std::move(origin);
  std::vector<const Node*> stack{&tree.root()};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    if (const auto feature = feature_of(node->kind)) ++v.counts[static_cast<std::size_t>(*feature)];
    for (const Node& c : node->children) stack.push_back(&c);
  }
  return v;
}

CStyleAnnotation to_annotation(const CStyleVector& vector) {
  CStyleAnnotation a;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (vector.counts[i] == 0) continue;
    a.tokens.push_back(fmt::format("{}={}", kind_name(static_cast<NodeKind>(i)), vector.counts[i]));
  }
  return a;
}

CStyleVector parse_annotation(const CStyleAnnotation& annotation) {
  std::map<std::string, std::uint64_t> counts;
  for (const std::string& token : annotation.tokens) {
    const auto eq = token.find('=');
    std::uint64_t value = 0;
    const char* begin = token.data() + (eq == std::string::npos ? 0 : eq + 1);
    const char* end = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (eq == std::string::npos || ec != std::errc{} || ptr != end) {
      throw Error(ErrorCode::invalid_argument, fmt::format("malformed annotation token '{}'", token));
    }
    counts[token.substr(0, eq)] = value;
  }
  return CStyleVector::from_counts(counts);
}

std::array<std::uint64_t, kFeatureCount> FeatureMatrix::column_sums() const {
  std::array<std::uint64_t, kFeatureCount> sums{};
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < kFeatureCount; ++i) sums[i] += row[i];
  }
  return sums;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string FeatureMatrix::to_csv() const {
  std::string out = "id";
  for (NodeKind k : feature_universe()) {
    out += ',';
    out += kind_name(k);
  }
  out += '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += csv_field(ids[r]);
    for (std::uint64_t c : rows[r]) out += fmt::format(",{}", c);
    out += '\n';
  }
  return out;
}

FeatureMatrix feature_matrix(const std::vector<CStyleVector>& vectors) {
  if (vectors.empty()) throw Error(ErrorCode::invalid_argument, "feature matrix needs at least one record");
  FeatureMatrix m;
  m.ids.reserve(vectors.size());
  m.rows.reserve(vectors.size());
  for (const CStyleVector& v : vectors) {
    m.ids.push_back(v.origin);
    m.rows.push_back(v.counts);
  }
  return m;
}

}  // namespace vulstyle
