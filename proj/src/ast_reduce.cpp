#include "vulstyle/ast_reduce.hpp"

namespace vulstyle {

std::string ReducedAstSequence::to_string() const {
  std::string out;
  for (const std::string& k : kinds) {
    if (!out.empty()) out += ' ';
    out += k;
  }
  return out;
}

ReducedAstSequence extract_nonterminals(const SyntaxTree& tree, std::string origin) {
  ReducedAstSequence seq;
  seq.origin = std::move(origin);
  std::vector<const Node*> stack{&tree.root()};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    if (!is_nonterminal(*node)) continue;
    seq.kinds.emplace_back(node->kind_name());
    for (auto it = node->children.rbegin(); it != node->children.rend(); ++it) stack.push_back(&*it);
  }
  return seq;
}

double reduction_ratio(const SyntaxTree& tree) {
  const std::size_t total = tree.node_count();
  return static_cast<double>(total - tree.leaf_count()) / static_cast<double>(total);
}

}  // namespace vulstyle
