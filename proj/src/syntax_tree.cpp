#include "vulstyle/syntax_tree.hpp"

#include <fmt/format.h>

#include "vulstyle/error.hpp"

namespace vulstyle {

using nlohmann::json;

Node Node::leaf(NodeKind kind, Span span, std::string text) {
  Node n;
  n.kind = kind;
  n.span = span;
  n.text = std::move(text);
  return n;
}

Node Node::branch(NodeKind kind, std::vector<Node> children) {
  Node n;
  n.kind = kind;
  if (!children.empty()) {
    n.span = {children.front().span.begin, children.back().span.end};
  }
  n.children = std::move(children);
  return n;
}

std::string_view Node::kind_name() const {
  if (kind == NodeKind::Unknown && !foreign_kind.empty()) return foreign_kind;
  return vulstyle::kind_name(kind);
}

namespace {

template <typename Visit>
void walk(const Node& root, Visit&& visit) {
  std::vector<const Node*> stack{&root};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    visit(*n);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(&*it);
  }
}

}  // namespace

std::size_t SyntaxTree::node_count() const {
  std::size_t count = 0;
  walk(root_, [&](const Node&) { ++count; });
  return count;
}

std::size_t SyntaxTree::leaf_count() const {
  std::size_t count = 0;
  walk(root_, [&](const Node& n) { count += n.is_leaf() ? 1 : 0; });
  return count;
}

std::vector<std::string> SyntaxTree::leaf_texts() const {
  std::vector<std::string> out;
  walk(root_, [&](const Node& n) {
    if (n.is_leaf() && n.text) out.push_back(*n.text);
  });
  return out;
}

std::size_t SyntaxTree::error_count() const {
  std::size_t count = 0;
  walk(root_, [&](const Node& n) { count += n.kind == NodeKind::ErrorNode ? 1 : 0; });
  return count;
}

namespace {

std::optional<std::string> check_node(const Node& node, const std::string& path) {
  if (node.span.begin > node.span.end) return path + ": span begins after it ends";
  if (node.children.empty() != node.text.has_value()) {
    return path + (node.children.empty() ? ": leaf without text" : ": internal node with text");
  }
  std::size_t cursor = node.span.begin;
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    const Node& child = node.children[i];
    const std::string child_path = fmt::format("{}.children[{}]", path, i);
    if (child.span.begin < cursor || child.span.end > node.span.end) {
      return child_path + ": span outside parent or overlapping previous sibling";
    }
    cursor = child.span.end;
    if (auto err = check_node(child, child_path)) return err;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> check_invariants(const Node& root) { return check_node(root, "$"); }

json export_node(const Node& node) {
  json j;
  j["kind"] = std::string(node.kind_name());
  j["span"] = json::array({node.span.begin, node.span.end});
  if (node.text) j["text"] = *node.text;
  if (!node.children.empty()) {
    json children = json::array();
    for (const Node& c : node.children) children.push_back(export_node(c));
    j["children"] = std::move(children);
  }
  return j;
}

json export_tree(const SyntaxTree& tree) {
  return json{{"source", tree.source()}, {"root", export_node(tree.root())}};
}

namespace {

constexpr std::size_t kMaxImportDepth = 4096;

[[noreturn]] void schema_error(const std::string& path, const std::string& message) {
  throw Error(ErrorCode::schema, fmt::format("tree document invalid at {}: {}", path, message));
}

class Importer {
 public:
  explicit Importer(std::optional<std::size_t> source_size) : source_size_(source_size) {}

  Node read(const json& j, const std::string& path, std::size_t depth) {
    if (depth > kMaxImportDepth) schema_error(path, "nesting too deep");
    if (!j.is_object()) schema_error(path, "expected an object");

    Node node;
    const auto kind_it = j.find("kind");
    if (kind_it == j.end() || !kind_it->is_string()) schema_error(path + ".kind", "missing or not a string");
    const std::string name = kind_it->get<std::string>();
    if (auto kind = kind_from_name(name)) {
      node.kind = *kind;
    } else {
      node.kind = NodeKind::Unknown;
      node.foreign_kind = name;
      warnings.push_back(fmt::format("{}: unknown kind '{}' treated as structural", path, name));
    }

    const auto span_it = j.find("span");
    const auto offset = [](const json& v) { return v.is_number_integer() && v.get<std::int64_t>() >= 0; };
    if (span_it == j.end() || !span_it->is_array() || span_it->size() != 2 || !offset((*span_it)[0]) ||
        !offset((*span_it)[1])) {
      schema_error(path + ".span", "expected [start, end] with non-negative integers");
    }
    node.span = {(*span_it)[0].get<std::size_t>(), (*span_it)[1].get<std::size_t>()};
    if (node.span.begin > node.span.end) schema_error(path + ".span", "start exceeds end");
    if (source_size_ && node.span.end > *source_size_) schema_error(path + ".span", "extends past the source");

    if (const auto it = j.find("children"); it != j.end()) {
      if (!it->is_array()) schema_error(path + ".children", "expected an array");
      for (std::size_t i = 0; i < it->size(); ++i) {
        node.children.push_back(read((*it)[i], fmt::format("{}.children[{}]", path, i), depth + 1));
      }
    }

    const auto text_it = j.find("text");
    if (node.children.empty()) {
      if (text_it == j.end() || !text_it->is_string()) schema_error(path + ".text", "leaf requires string text");
      node.text = text_it->get<std::string>();
    } else if (text_it != j.end()) {
      schema_error(path + ".text", "only leaves carry text");
    }

    std::size_t cursor = node.span.begin;
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      const Span s = node.children[i].span;
      if (s.begin < cursor || s.end > node.span.end) {
        schema_error(fmt::format("{}.children[{}].span", path, i),
                     "outside parent span or overlapping previous sibling");
      }
      cursor = s.end;
    }
    return node;
  }

  std::vector<std::string> warnings;

 private:
  std::optional<std::size_t> source_size_;
};

}  // namespace

ImportedTree import_tree(const json& document) {
  if (!document.is_object()) schema_error("$", "expected an object");
  std::string source;
  std::optional<std::size_t> source_size;
  const json* root = &document;
  std::string path = "$";
  if (const auto it = document.find("root"); it != document.end()) {
    root = &*it;
    path = "$.root";
    if (const auto src = document.find("source"); src != document.end()) {
      if (!src->is_string()) schema_error("$.source", "expected a string");
      source = src->get<std::string>();
      source_size = source.size();
    }
  }
  Importer importer(source_size);
  Node node = importer.read(*root, path, 0);
  return ImportedTree{SyntaxTree(std::move(node), std::move(source)), std::move(importer.warnings)};
}

}  // namespace vulstyle
