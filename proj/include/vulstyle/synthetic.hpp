#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vulstyle/corpus.hpp"

namespace vulstyle {

struct GeneratorSpec {
  std::size_t n = 2000;
  double vulnerable_fraction = 0.5;
  /// Probability that a vulnerable function carries the planted pattern.
  double signal_strength = 0.9;
  std::uint64_t seed = 1;

  /// Throws Error(invalid_argument) for n < 10 or fractions out of range.
  void validate() const;
  nlohmann::json to_json() const;
};

/// C functions built from a shared pool of statement blocks. Safe functions
/// and unplanted vulnerable ones carry at most two top-level if statements;
/// the planted pattern adds an unchecked copy under three nested ifs, so it
/// shows up as an if nested three deep. Exactly
/// round(n * vulnerable_fraction) records are labeled 1.
std::vector<FunctionRecord> generate(const GeneratorSpec& spec);

}  // namespace vulstyle
