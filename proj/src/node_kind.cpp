#include "vulstyle/node_kind.hpp"

#include <unordered_map>

namespace vulstyle {
namespace {

struct KindInfo {
  std::string_view name;
  NodeCategory category;
};

constexpr std::array<KindInfo, kNodeKindCount> kKindTable{{
#define VULSTYLE_INFO_ENTRY(name, category) {#name, NodeCategory::category},
    VULSTYLE_NODE_KINDS(VULSTYLE_INFO_ENTRY)
#undef VULSTYLE_INFO_ENTRY
}};

static_assert(static_cast<std::size_t>(NodeKind::MethodInvocation) + 1 == kFeatureCount,
              "feature kinds must lead the taxonomy");

}  // namespace

std::string_view kind_name(NodeKind kind) {
  return kKindTable[static_cast<std::size_t>(kind)].name;
}

NodeCategory kind_category(NodeKind kind) {
  return kKindTable[static_cast<std::size_t>(kind)].category;
}

std::string_view category_name(NodeCategory category) {
  switch (category) {
    case NodeCategory::statement: return "statement";
    case NodeCategory::expression: return "expression";
    case NodeCategory::type: return "type";
    case NodeCategory::declaration: return "declaration";
    case NodeCategory::invocation: return "invocation";
    case NodeCategory::structural: return "structural";
    case NodeCategory::terminal: return "terminal";
  }
  return "structural";
}

std::optional<NodeKind> kind_from_name(std::string_view name) {
  static const std::unordered_map<std::string_view, NodeKind> lookup = [] {
    std::unordered_map<std::string_view, NodeKind> m;
    for (std::size_t i = 0; i < kNodeKindCount; ++i) {
      m.emplace(kKindTable[i].name, static_cast<NodeKind>(i));
    }
    // Unknown is a placeholder, never a real name.
    m.erase("Unknown");
    return m;
  }();
  const auto it = lookup.find(name);
  if (it == lookup.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeKind> feature_of(NodeKind kind) {
  if (static_cast<std::size_t>(kind) < kFeatureCount) return kind;
  if (kind == NodeKind::FunctionDefinition) return NodeKind::MethodDeclaration;
  if (kind == NodeKind::CompoundStatement) return NodeKind::BlockStatement;
  return std::nullopt;
}

bool is_import_only(NodeKind kind) {
  switch (kind) {
    case NodeKind::SynchronizedStatement:
    case NodeKind::InterfaceDeclaration:
    case NodeKind::AnnotationDeclaration:
    case NodeKind::Unknown:
      return true;
    default:
      return false;
  }
}

const std::array<NodeKind, kNodeKindCount>& all_kinds() {
  static const std::array<NodeKind, kNodeKindCount> kinds = [] {
    std::array<NodeKind, kNodeKindCount> a{};
    for (std::size_t i = 0; i < kNodeKindCount; ++i) a[i] = static_cast<NodeKind>(i);
    return a;
  }();
  return kinds;
}

}  // namespace vulstyle
