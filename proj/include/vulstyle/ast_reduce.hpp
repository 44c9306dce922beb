#pragma once

#include <string>
#include <vector>

#include "vulstyle/syntax_tree.hpp"

namespace vulstyle {

/// Pre-order list of the kind names of every non-terminal node.
struct ReducedAstSequence {
  std::vector<std::string> kinds;
  std::string origin;

  /// Kind names joined by single spaces.
  std::string to_string() const;

  bool operator==(const ReducedAstSequence&) const = default;
};

ReducedAstSequence extract_nonterminals(const SyntaxTree& tree, std::string origin = {});

/// Fraction of nodes that are non-terminal: |non-terminals| / |all nodes|.
double reduction_ratio(const SyntaxTree& tree);

}  // namespace vulstyle
