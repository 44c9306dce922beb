#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vulstyle/node_kind.hpp"

namespace vulstyle {

/// Half-open byte range into the parsed source.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

/// One syntax tree node. Leaves carry token text; internal nodes carry none.
struct Node {
  NodeKind kind = NodeKind::Unknown;
  /// Original kind name for imported nodes whose kind is outside the taxonomy.
  std::string foreign_kind;
  Span span;
  std::optional<std::string> text;
  std::vector<Node> children;

  static Node leaf(NodeKind kind, Span span, std::string text);
  static Node branch(NodeKind kind, std::vector<Node> children);

  std::string_view kind_name() const;
  NodeCategory category() const { return kind_category(kind); }
  bool is_leaf() const { return children.empty(); }

  bool operator==(const Node&) const = default;
};

/// True iff the node has at least one child.
inline bool is_nonterminal(const Node& node) { return !node.children.empty(); }

class SyntaxTree {
 public:
  SyntaxTree(Node root, std::string source)
      : root_(std::move(root)), source_(std::move(source)) {}

  const Node& root() const { return root_; }
  const std::string& source() const { return source_; }

  std::size_t node_count() const;
  std::size_t leaf_count() const;
  /// Leaf texts in document order.
  std::vector<std::string> leaf_texts() const;
  /// Number of ErrorNode subtrees anywhere in the tree.
  std::size_t error_count() const;

 private:
  Node root_;
  std::string source_;
};

/// Checks the node invariants (leaf iff text present iff no children; child
/// spans ordered, disjoint and contained in the parent). Returns a message
/// naming the first offending path, or nullopt when the tree is well formed.
std::optional<std::string> check_invariants(const Node& root);

/// Tree-exchange document: {"source": ..., "root": {kind, span, text?, children?}}.
nlohmann::json export_tree(const SyntaxTree& tree);
nlohmann::json export_node(const Node& node);

struct ImportedTree {
  SyntaxTree tree;
  std::vector<std::string> warnings;
};

/// Accepts either a full document with "root" or a bare node object.
/// Throws Error(schema) naming the offending path on any violation.
ImportedTree import_tree(const nlohmann::json& document);

}  // namespace vulstyle
