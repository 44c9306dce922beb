#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace vulstyle {

enum class NodeCategory {
  statement,
  expression,
  type,
  declaration,
  invocation,
  structural,
  terminal,
};

// X(name, category)
//
// The first 37 entries are the stylometry feature universe, in its fixed
// column order. Keep them first and contiguous.
#define VULSTYLE_NODE_KINDS(X)            \
  X(IfStatement, statement)               \
  X(WhileStatement, statement)            \
  X(DoStatement, statement)               \
  X(AssertStatement, statement)           \
  X(SwitchStatement, statement)           \
  X(ForStatement, statement)              \
  X(ContinueStatement, statement)         \
  X(ReturnStatement, statement)           \
  X(ThrowStatement, statement)            \
  X(SynchronizedStatement, statement)     \
  X(TryStatement, statement)              \
  X(BreakStatement, statement)            \
  X(BlockStatement, statement)            \
  X(BinaryOperation, statement)           \
  X(CatchClause, statement)               \
  X(StatementExpression, expression)      \
  X(TernaryExpression, expression)        \
  X(LambdaExpression, expression)         \
  X(RecordType, type)                     \
  X(BuiltinType, type)                    \
  X(ConstantArrayType, type)              \
  X(PointerType, type)                    \
  X(TypeDeclaration, declaration)         \
  X(FieldDeclaration, declaration)        \
  X(MethodDeclaration, declaration)       \
  X(ConstructorDeclaration, declaration)  \
  X(PackageDeclaration, declaration)      \
  X(ClassDeclaration, declaration)        \
  X(EnumDeclaration, declaration)         \
  X(InterfaceDeclaration, declaration)    \
  X(AnnotationDeclaration, declaration)   \
  X(ConstantDeclaration, declaration)     \
  X(VariableDeclaration, declaration)     \
  X(LocalVariableDeclaration, declaration)\
  X(EnumConstantDeclaration, declaration) \
  X(VariableDeclarator, declaration)      \
  X(MethodInvocation, invocation)         \
  X(FunctionDefinition, declaration)      \
  X(CompoundStatement, statement)         \
  X(TranslationUnit, structural)          \
  X(ErrorNode, structural)                \
  X(ParameterList, structural)            \
  X(ParameterDeclaration, structural)     \
  X(ArgumentList, structural)             \
  X(UnaryOperation, structural)           \
  X(CastExpression, structural)           \
  X(ParenExpression, structural)          \
  X(ArraySubscript, structural)           \
  X(MemberAccess, structural)             \
  X(QualifiedName, structural)            \
  X(InitializerList, structural)          \
  X(ConcatenatedString, structural)       \
  X(CaseLabel, structural)                \
  X(LabeledStatement, structural)         \
  X(GotoStatement, structural)            \
  X(EmptyStatement, structural)           \
  X(AccessSpecifier, structural)          \
  X(UsingDirective, structural)           \
  X(ReferenceType, structural)            \
  X(IncompleteArrayType, structural)      \
  X(ParenDeclarator, structural)          \
  X(MemberInitializer, structural)        \
  X(Unknown, structural)                  \
  X(Identifier, terminal)                 \
  X(IntegerLiteral, terminal)             \
  X(FloatingLiteral, terminal)            \
  X(StringLiteral, terminal)              \
  X(CharacterLiteral, terminal)           \
  X(Keyword, terminal)                    \
  X(Operator, terminal)                   \
  X(Punctuation, terminal)

enum class NodeKind {
#define VULSTYLE_ENUM_ENTRY(name, category) name,
  VULSTYLE_NODE_KINDS(VULSTYLE_ENUM_ENTRY)
#undef VULSTYLE_ENUM_ENTRY
};

inline constexpr std::size_t kNodeKindCount = 0
#define VULSTYLE_COUNT_ENTRY(name, category) +1
    VULSTYLE_NODE_KINDS(VULSTYLE_COUNT_ENTRY)
#undef VULSTYLE_COUNT_ENTRY
    ;

/// Number of stylometry features; they occupy NodeKind values [0, kFeatureCount).
inline constexpr std::size_t kFeatureCount = 37;

std::string_view kind_name(NodeKind kind);
NodeCategory kind_category(NodeKind kind);
std::string_view category_name(NodeCategory category);

/// Canonical kind for a name, or nullopt for names outside the taxonomy.
std::optional<NodeKind> kind_from_name(std::string_view name);

/// Stylometry feature a node of this kind counts towards.
///
/// Feature kinds count towards themselves. FunctionDefinition counts as a
/// MethodDeclaration and CompoundStatement (function bodies) as a
/// BlockStatement; every other kind contributes nothing.
std::optional<NodeKind> feature_of(NodeKind kind);

/// Kinds that the bundled C-like parser never produces; they only appear in
/// trees brought in through the tree-exchange format.
bool is_import_only(NodeKind kind);

const std::array<NodeKind, kNodeKindCount>& all_kinds();

}  // namespace vulstyle
