#include "vulstyle/parser.hpp"

#include <optional>
#include <unordered_set>
#include <vector>

#include "vulstyle/lexer.hpp"

namespace vulstyle {
namespace {

// Thrown inside the parser when the grammar cannot continue; caught at the
// statement / declaration level and turned into an ErrorNode.
struct SyntaxFailure {};

constexpr int kMaxDepth = 256;

bool is_builtin_type_word(std::string_view w) {
  static const std::unordered_set<std::string_view> words{
      "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "_Bool", "bool", "auto"};
  return words.contains(w);
}

bool is_qualifier_word(std::string_view w) {
  static const std::unordered_set<std::string_view> words{
      "static",   "extern",     "inline", "__inline", "__inline__", "register", "const",
      "volatile", "restrict",   "__restrict", "typedef", "virtual",  "constexpr"};
  return words.contains(w);
}

bool is_record_word(std::string_view w) {
  return w == "struct" || w == "union" || w == "enum" || w == "class";
}

bool is_assignment_op(std::string_view op) {
  return op == "=" || op == "+=" || op == "-=" || op == "*=" || op == "/=" || op == "%=" || op == "&=" ||
         op == "|=" || op == "^=" || op == "<<=" || op == ">>=";
}

int binary_precedence(const Token& t) {
  if (t.kind != TokenKind::op) return -1;
  const std::string_view op = t.text;
  if (op == "||") return 1;
  if (op == "&&") return 2;
  if (op == "|") return 3;
  if (op == "^") return 4;
  if (op == "&") return 5;
  if (op == "==" || op == "!=") return 6;
  if (op == "<" || op == ">" || op == "<=" || op == ">=") return 7;
  if (op == "<<" || op == ">>") return 8;
  if (op == "+" || op == "-") return 9;
  if (op == "*" || op == "/" || op == "%") return 10;
  return -1;
}

enum class DeclContext { file, local, field, parameter };

struct Specifiers {
  std::vector<Node> nodes;
  bool has_type = false;
  bool is_typedef = false;
  bool is_const = false;
};

struct Declarator {
  std::vector<Node> pieces;
  bool is_function = false;
  bool has_name = false;
};

class Parser {
 public:
  explicit Parser(std::string_view source) : tokens_(lex(source)) {}

  bool empty() const { return tokens_.size() == 1; }

  std::vector<Node> translation_unit() {
    std::vector<Node> items;
    while (!at_end()) items.push_back(guarded([&] { return external_declaration(); }, /*in_block=*/false));
    return items;
  }

 private:
  // ---- token helpers -------------------------------------------------------

  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = pos_ + ahead;
    return i < tokens_.size() ? tokens_[i] : tokens_.back();
  }
  bool at_end() const { return peek().kind == TokenKind::end; }
  bool check(std::string_view s, std::size_t ahead = 0) const { return peek(ahead).is(s); }
  bool check_kind(TokenKind k, std::size_t ahead = 0) const { return peek(ahead).kind == k; }

  static Node make_leaf(const Token& t) {
    NodeKind kind = NodeKind::Punctuation;
    switch (t.kind) {
      case TokenKind::identifier: kind = NodeKind::Identifier; break;
      case TokenKind::keyword: kind = NodeKind::Keyword; break;
      case TokenKind::integer: kind = NodeKind::IntegerLiteral; break;
      case TokenKind::floating: kind = NodeKind::FloatingLiteral; break;
      case TokenKind::string: kind = NodeKind::StringLiteral; break;
      case TokenKind::character: kind = NodeKind::CharacterLiteral; break;
      case TokenKind::op: kind = NodeKind::Operator; break;
      case TokenKind::punct:
      case TokenKind::unknown:
      case TokenKind::end: kind = NodeKind::Punctuation; break;
    }
    return Node::leaf(kind, t.span, std::string(t.text));
  }

  Node take() {
    if (at_end()) throw SyntaxFailure{};
    return make_leaf(tokens_[pos_++]);
  }

  Node expect(std::string_view s) {
    if (!check(s)) throw SyntaxFailure{};
    return take();
  }

  Node expect_kind(TokenKind k) {
    if (!check_kind(k)) throw SyntaxFailure{};
    return take();
  }

  struct DepthGuard {
    explicit DepthGuard(int& d) : depth(d) {
      if (++depth > kMaxDepth) {
        --depth;
        throw SyntaxFailure{};
      }
    }
    ~DepthGuard() { --depth; }
    int& depth;
  };

  // ---- error recovery ------------------------------------------------------

  // Runs `rule`; on failure rewinds and swallows tokens up to the end of the
  // construct. Inside a block the closing brace of the enclosing block is
  // left in place.
  template <typename Rule>
  Node guarded(Rule&& rule, bool in_block) {
    const std::size_t start = pos_;
    const int depth = depth_;
    try {
      return rule();
    } catch (const SyntaxFailure&) {
      pos_ = start;
      depth_ = depth;
      return recover(in_block);
    }
  }

  Node recover(bool in_block) {
    std::vector<Node> skipped;
    int nesting = 0;
    while (!at_end()) {
      const Token& t = peek();
      if (nesting == 0 && in_block && t.is("}")) break;
      if (t.is("{") || t.is("(") || t.is("[")) ++nesting;
      if ((t.is("}") || t.is(")") || t.is("]")) && nesting > 0) --nesting;
      const bool closes_block = t.is("}") && nesting == 0;
      const bool ends_statement = t.is(";") && nesting == 0;
      skipped.push_back(take());
      if (ends_statement) break;
      if (closes_block) {
        if (check(";")) skipped.push_back(take());
        break;
      }
    }
    if (skipped.empty()) skipped.push_back(take());
    return Node::branch(NodeKind::ErrorNode, std::move(skipped));
  }

  // ---- declarations --------------------------------------------------------

  Node external_declaration() {
    if (check("namespace")) return namespace_declaration();
    if (check("using")) return using_directive();
    if (check(";")) return Node::branch(NodeKind::EmptyStatement, {take()});
    return declaration(DeclContext::file, {});
  }

  Node namespace_declaration() {
    std::vector<Node> kids{take()};
    if (check_kind(TokenKind::identifier)) kids.push_back(take());
    kids.push_back(expect("{"));
    while (!check("}") && !at_end()) kids.push_back(guarded([&] { return external_declaration(); }, true));
    kids.push_back(expect("}"));
    return Node::branch(NodeKind::PackageDeclaration, std::move(kids));
  }

  Node using_directive() {
    std::vector<Node> kids{take()};
    while (!check(";")) {
      if (at_end() || check("{") || check("}")) throw SyntaxFailure{};
      kids.push_back(take());
    }
    kids.push_back(take());
    return Node::branch(NodeKind::UsingDirective, std::move(kids));
  }

  // Scans a possibly qualified identifier starting at `ahead`; returns the
  // offset just past it, or nullopt when no identifier is there.
  std::optional<std::size_t> scan_name(std::size_t ahead) const {
    if (check("::", ahead)) ++ahead;
    if (!check_kind(TokenKind::identifier, ahead)) return std::nullopt;
    ++ahead;
    while (check("::", ahead) && check_kind(TokenKind::identifier, ahead + 1)) ahead += 2;
    return ahead;
  }

  Node name() {
    const auto end = scan_name(0);
    if (!end) throw SyntaxFailure{};
    if (*end == 1) return take();
    std::vector<Node> parts;
    for (std::size_t i = 0; i < *end; ++i) parts.push_back(take());
    return Node::branch(NodeKind::QualifiedName, std::move(parts));
  }

  bool starts_specifier(const Token& t) const {
    return t.kind == TokenKind::keyword &&
           (is_builtin_type_word(t.text) || is_qualifier_word(t.text) || is_record_word(t.text));
  }

  Specifiers specifiers(std::string_view class_name = {}) {
    Specifiers s;
    while (true) {
      const Token& t = peek();
      if (t.kind == TokenKind::keyword && is_builtin_type_word(t.text)) {
        std::vector<Node> words;
        while (check_kind(TokenKind::keyword) && is_builtin_type_word(peek().text)) words.push_back(take());
        s.nodes.push_back(Node::branch(NodeKind::BuiltinType, std::move(words)));
        s.has_type = true;
      } else if (t.kind == TokenKind::keyword && is_qualifier_word(t.text)) {
        s.is_typedef = s.is_typedef || t.text == "typedef";
        s.is_const = s.is_const || t.text == "const";
        s.nodes.push_back(take());
      } else if (t.kind == TokenKind::keyword && is_record_word(t.text) && !s.has_type) {
        s.nodes.push_back(record_specifier());
        s.has_type = true;
      } else if ((t.kind == TokenKind::identifier || t.is("::")) && !s.has_type) {
        const auto end = scan_name(0);
        if (!end) break;
        if (!class_name.empty() && peek().text == class_name && check("(", *end)) break;
        const Token& after = peek(*end);
        if (after.kind == TokenKind::keyword && (is_builtin_type_word(after.text) || is_qualifier_word(after.text))) {
          // Attribute-like macro in front of the real type, e.g. `static av_cold int`.
          s.nodes.push_back(take());
        } else if (after.kind == TokenKind::identifier || after.is("*") || after.is("&") || after.is("&&") ||
                   after.is("~")) {
          s.nodes.push_back(Node::branch(NodeKind::RecordType, {name()}));
          s.has_type = true;
        } else {
          break;
        }
      } else if (t.kind == TokenKind::identifier && s.has_type && check_kind(TokenKind::identifier, 1)) {
        // Trailing attribute macro, e.g. `int av_unused x`.
        s.nodes.push_back(take());
      } else {
        break;
      }
    }
    return s;
  }

  Node record_specifier() {
    std::vector<Node> kids{take()};
    const bool is_enum = kids.front().text == "enum";
    std::string record_name;
    if (is_enum && (check("class") || check("struct"))) kids.push_back(take());
    if (scan_name(0)) {
      record_name = std::string(peek(*scan_name(0) - 1).text);
      kids.push_back(name());
    }
    if (check(":") && !is_enum) {
      // Base clause: keep the tokens as leaves.
      while (!check("{")) {
        if (at_end() || check(";")) throw SyntaxFailure{};
        kids.push_back(take());
      }
    } else if (check(":") && is_enum) {
      kids.push_back(take());
      Specifiers base = specifiers();
      for (Node& n : base.nodes) kids.push_back(std::move(n));
    }
    if (!check("{")) {
      if (kids.size() < 2) throw SyntaxFailure{};
      return Node::branch(NodeKind::RecordType, std::move(kids));
    }
    kids.push_back(take());
    if (is_enum) {
      while (!check("}")) {
        std::vector<Node> item{expect_kind(TokenKind::identifier)};
        if (check("=")) {
          item.push_back(take());
          item.push_back(conditional());
        }
        kids.push_back(Node::branch(NodeKind::EnumConstantDeclaration, std::move(item)));
        if (!check(",")) break;
        kids.push_back(take());
      }
      kids.push_back(expect("}"));
      return Node::branch(NodeKind::EnumDeclaration, std::move(kids));
    }
    while (!check("}") && !at_end()) kids.push_back(guarded([&] { return member(record_name); }, true));
    kids.push_back(expect("}"));
    return Node::branch(NodeKind::ClassDeclaration, std::move(kids));
  }

  Node member(const std::string& class_name) {
    if ((check("public") || check("private") || check("protected")) && check(":", 1)) {
      std::vector<Node> kids{take()};
      kids.push_back(take());
      return Node::branch(NodeKind::AccessSpecifier, std::move(kids));
    }
    if (check(";")) return Node::branch(NodeKind::EmptyStatement, {take()});
    if (!class_name.empty() && peek().kind == TokenKind::identifier && peek().text == class_name && check("(", 1)) {
      return constructor();
    }
    return declaration(DeclContext::field, class_name);
  }

  Node constructor() {
    std::vector<Node> kids{take()};
    kids.push_back(parameter_list());
    if (check(":")) {
      kids.push_back(take());
      while (true) {
        std::vector<Node> init{name()};
        init.push_back(argument_list());
        kids.push_back(Node::branch(NodeKind::MemberInitializer, std::move(init)));
        if (!check(",")) break;
        kids.push_back(take());
      }
    }
    if (check(";")) {
      kids.push_back(take());
    } else {
      kids.push_back(block(NodeKind::CompoundStatement));
    }
    return Node::branch(NodeKind::ConstructorDeclaration, std::move(kids));
  }

  Declarator declarator(bool abstract_allowed) {
    DepthGuard guard(depth_);
    Declarator d;
    while (check("*") || check("&") || check("&&")) {
      const bool pointer = check("*");
      std::vector<Node> kids{take()};
      while (check("const") || check("volatile") || check("restrict") || check("__restrict")) kids.push_back(take());
      d.pieces.push_back(Node::branch(pointer ? NodeKind::PointerType : NodeKind::ReferenceType, std::move(kids)));
    }
    bool named_directly = false;
    if (check("~") && check_kind(TokenKind::identifier, 1)) {
      std::vector<Node> kids{take()};
      kids.push_back(take());
      d.pieces.push_back(Node::branch(NodeKind::QualifiedName, std::move(kids)));
      named_directly = d.has_name = true;
    } else if (scan_name(0)) {
      d.pieces.push_back(name());
      named_directly = d.has_name = true;
    } else if (check("(") && (check("*", 1) || check("&", 1) || check("^", 1))) {
      std::vector<Node> kids{take()};
      Declarator inner = declarator(abstract_allowed);
      for (Node& n : inner.pieces) kids.push_back(std::move(n));
      kids.push_back(expect(")"));
      d.pieces.push_back(Node::branch(NodeKind::ParenDeclarator, std::move(kids)));
      d.has_name = inner.has_name;
    } else if (!abstract_allowed) {
      throw SyntaxFailure{};
    }
    bool first_suffix = true;
    while (true) {
      if (check("[")) {
        std::vector<Node> kids{take()};
        const bool sized = !check("]");
        if (sized) kids.push_back(expression());
        kids.push_back(expect("]"));
        d.pieces.push_back(
            Node::branch(sized ? NodeKind::ConstantArrayType : NodeKind::IncompleteArrayType, std::move(kids)));
      } else if (check("(")) {
        d.pieces.push_back(parameter_list());
        if (first_suffix && named_directly) d.is_function = true;
      } else {
        break;
      }
      first_suffix = false;
    }
    return d;
  }

  Node parameter_list() {
    std::vector<Node> kids{expect("(")};
    while (!check(")")) {
      if (check("...")) {
        kids.push_back(take());
      } else {
        std::vector<Node> param;
        Specifiers s = specifiers();
        for (Node& n : s.nodes) param.push_back(std::move(n));
        Declarator d = declarator(/*abstract_allowed=*/true);
        for (Node& n : d.pieces) param.push_back(std::move(n));
        if (check("=")) {
          param.push_back(take());
          param.push_back(assignment());
        }
        if (param.empty()) throw SyntaxFailure{};
        kids.push_back(Node::branch(NodeKind::ParameterDeclaration, std::move(param)));
      }
      if (!check(",")) break;
      kids.push_back(take());
    }
    kids.push_back(expect(")"));
    return Node::branch(NodeKind::ParameterList, std::move(kids));
  }

  Node initializer() {
    if (!check("{")) return assignment();
    DepthGuard guard(depth_);
    std::vector<Node> kids{take()};
    while (!check("}")) {
      if (check(".") && check_kind(TokenKind::identifier, 1)) {
        kids.push_back(take());
        kids.push_back(take());
        kids.push_back(expect("="));
      } else if (check("[")) {
        kids.push_back(take());
        kids.push_back(conditional());
        kids.push_back(expect("]"));
        kids.push_back(expect("="));
      }
      kids.push_back(initializer());
      if (!check(",")) break;
      kids.push_back(take());
    }
    kids.push_back(expect("}"));
    return Node::branch(NodeKind::InitializerList, std::move(kids));
  }

  Node declaration(DeclContext ctx, std::string_view class_name) {
    Specifiers spec = specifiers(class_name);
    std::vector<Node> kids = std::move(spec.nodes);

    if (check(";")) {
      if (kids.empty()) throw SyntaxFailure{};
      if (kids.size() == 1 && (kids[0].kind == NodeKind::ClassDeclaration || kids[0].kind == NodeKind::EnumDeclaration ||
                               kids[0].kind == NodeKind::RecordType)) {
        Node n = std::move(kids[0]);
        n.children.push_back(take());
        n.span.end = n.children.back().span.end;
        return n;
      }
      kids.push_back(take());
      return Node::branch(variable_kind(ctx, spec), std::move(kids));
    }
    if (!spec.has_type && ctx != DeclContext::field) {
      // Without a type this is only a declaration if the name is followed by
      // a parameter list (implicit-int or macro-decorated function).
      if (!(scan_name(0) && check("(", *scan_name(0)))) throw SyntaxFailure{};
      if (ctx == DeclContext::local) throw SyntaxFailure{};
    }

    Declarator first = declarator(/*abstract_allowed=*/false);
    if (first.is_function) {
      for (Node& n : first.pieces) kids.push_back(std::move(n));
      while (check("const") || check("volatile") || (check_kind(TokenKind::identifier) && check("{", 1))) {
        kids.push_back(take());
      }
      if (check("{") && ctx != DeclContext::local) {
        kids.push_back(block(NodeKind::CompoundStatement));
        return Node::branch(NodeKind::FunctionDefinition, std::move(kids));
      }
      if (check("=") && (check_kind(TokenKind::integer, 1) || check_kind(TokenKind::identifier, 1))) {
        kids.push_back(take());  // = 0, = default, = delete
        kids.push_back(take());
      }
      while (check(",")) {
        kids.push_back(take());
        Declarator more = declarator(false);
        for (Node& n : more.pieces) kids.push_back(std::move(n));
      }
      kids.push_back(expect(";"));
      return Node::branch(NodeKind::MethodDeclaration, std::move(kids));
    }

    auto finish_declarator = [&](Declarator d) {
      std::vector<Node> pieces = std::move(d.pieces);
      if (check(":") && ctx == DeclContext::field) {
        pieces.push_back(take());
        pieces.push_back(conditional());
      }
      if (check("=")) {
        pieces.push_back(take());
        pieces.push_back(initializer());
      } else if (check("(") && ctx == DeclContext::local) {
        pieces.push_back(argument_list());
      }
      if (spec.is_typedef) {
        for (Node& n : pieces) kids.push_back(std::move(n));
      } else {
        kids.push_back(Node::branch(NodeKind::VariableDeclarator, std::move(pieces)));
      }
    };
    finish_declarator(std::move(first));
    while (check(",")) {
      kids.push_back(take());
      finish_declarator(declarator(false));
    }
    kids.push_back(expect(";"));
    return Node::branch(variable_kind(ctx, spec), std::move(kids));
  }

  static NodeKind variable_kind(DeclContext ctx, const Specifiers& spec) {
    if (spec.is_typedef) return NodeKind::TypeDeclaration;
    if (ctx == DeclContext::field) return NodeKind::FieldDeclaration;
    if (spec.is_const) return NodeKind::ConstantDeclaration;
    return ctx == DeclContext::file ? NodeKind::VariableDeclaration : NodeKind::LocalVariableDeclaration;
  }

  bool looks_like_declaration() const {
    const Token& t = peek();
    if (t.kind == TokenKind::keyword) {
      return is_builtin_type_word(t.text) || is_qualifier_word(t.text) || is_record_word(t.text);
    }
    const auto end = scan_name(0);
    if (!end) return false;
    std::size_t i = *end;
    if (check_kind(TokenKind::identifier, i)) return true;
    if (peek(i).kind == TokenKind::keyword && is_builtin_type_word(peek(i).text)) return true;
    if (!(check("*", i) || check("&", i))) return false;
    while (check("*", i) || check("&", i) || check("const", i)) ++i;
    if (!check_kind(TokenKind::identifier, i)) return false;
    const Token& after = peek(i + 1);
    return after.is(";") || after.is("=") || after.is(",") || after.is("[") || after.is(")");
  }

  // ---- statements ----------------------------------------------------------

  Node block(NodeKind kind) {
    DepthGuard guard(depth_);
    std::vector<Node> kids{expect("{")};
    while (!check("}")) {
      if (at_end()) throw SyntaxFailure{};
      kids.push_back(guarded([&] { return statement(); }, true));
    }
    kids.push_back(take());
    return Node::branch(kind, std::move(kids));
  }

  Node statement() {
    DepthGuard guard(depth_);
    const Token& t = peek();
    if (t.is("{")) return block(NodeKind::BlockStatement);
    if (t.is(";")) return Node::branch(NodeKind::EmptyStatement, {take()});
    if (t.kind == TokenKind::keyword) {
      const std::string_view w = t.text;
      if (w == "if") return if_statement();
      if (w == "while") return while_statement();
      if (w == "do") return do_statement();
      if (w == "for") return for_statement();
      if (w == "switch") return keyword_paren_body(NodeKind::SwitchStatement);
      if (w == "return") return jump(NodeKind::ReturnStatement, true);
      if (w == "throw") return jump(NodeKind::ThrowStatement, true);
      if (w == "break") return jump(NodeKind::BreakStatement, false);
      if (w == "continue") return jump(NodeKind::ContinueStatement, false);
      if (w == "goto") {
        std::vector<Node> kids{take()};
        kids.push_back(expect_kind(TokenKind::identifier));
        kids.push_back(expect(";"));
        return Node::branch(NodeKind::GotoStatement, std::move(kids));
      }
      if (w == "case" || w == "default") {
        std::vector<Node> kids{take()};
        if (w == "case") kids.push_back(conditional());
        kids.push_back(expect(":"));
        return Node::branch(NodeKind::CaseLabel, std::move(kids));
      }
      if (w == "try") return try_statement();
    }
    if (t.kind == TokenKind::identifier && check(":", 1)) {
      std::vector<Node> kids{take()};
      kids.push_back(take());
      if (!check("}")) kids.push_back(statement());
      return Node::branch(NodeKind::LabeledStatement, std::move(kids));
    }
    if (t.kind == TokenKind::identifier && t.text == "assert" && check("(", 1)) {
      const std::size_t start = pos_;
      try {
        std::vector<Node> kids{take()};
        kids.push_back(take());
        kids.push_back(expression());
        kids.push_back(expect(")"));
        kids.push_back(expect(";"));
        return Node::branch(NodeKind::AssertStatement, std::move(kids));
      } catch (const SyntaxFailure&) {
        pos_ = start;
      }
    }
    if (looks_like_declaration()) return declaration(DeclContext::local, {});
    std::vector<Node> kids{expression()};
    kids.push_back(expect(";"));
    return Node::branch(NodeKind::StatementExpression, std::move(kids));
  }

  void paren_condition(std::vector<Node>& kids) {
    kids.push_back(expect("("));
    kids.push_back(looks_like_declaration() ? condition_declaration() : expression());
    kids.push_back(expect(")"));
  }

  // `if (int n = f())` style condition.
  Node condition_declaration() {
    Specifiers spec = specifiers();
    std::vector<Node> kids = std::move(spec.nodes);
    Declarator d = declarator(false);
    std::vector<Node> pieces = std::move(d.pieces);
    pieces.push_back(expect("="));
    pieces.push_back(assignment());
    kids.push_back(Node::branch(NodeKind::VariableDeclarator, std::move(pieces)));
    return Node::branch(NodeKind::LocalVariableDeclaration, std::move(kids));
  }

  Node if_statement() {
    std::vector<Node> kids{take()};
    paren_condition(kids);
    kids.push_back(statement());
    if (check("else")) {
      kids.push_back(take());
      kids.push_back(statement());
    }
    return Node::branch(NodeKind::IfStatement, std::move(kids));
  }

  Node while_statement() { return keyword_paren_body(NodeKind::WhileStatement); }

  Node keyword_paren_body(NodeKind kind) {
    std::vector<Node> kids{take()};
    paren_condition(kids);
    kids.push_back(statement());
    return Node::branch(kind, std::move(kids));
  }

  Node do_statement() {
    std::vector<Node> kids{take()};
    kids.push_back(statement());
    kids.push_back(expect("while"));
    kids.push_back(expect("("));
    kids.push_back(expression());
    kids.push_back(expect(")"));
    kids.push_back(expect(";"));
    return Node::branch(NodeKind::DoStatement, std::move(kids));
  }

  Node for_statement() {
    std::vector<Node> kids{take()};
    kids.push_back(expect("("));
    if (check(";")) {
      kids.push_back(take());
    } else if (looks_like_declaration()) {
      kids.push_back(declaration(DeclContext::local, {}));
    } else {
      kids.push_back(expression());
      kids.push_back(expect(";"));
    }
    if (!check(";")) kids.push_back(expression());
    kids.push_back(expect(";"));
    if (!check(")")) kids.push_back(expression());
    kids.push_back(expect(")"));
    kids.push_back(statement());
    return Node::branch(NodeKind::ForStatement, std::move(kids));
  }

  Node jump(NodeKind kind, bool allows_value) {
    std::vector<Node> kids{take()};
    if (allows_value && !check(";")) kids.push_back(expression());
    kids.push_back(expect(";"));
    return Node::branch(kind, std::move(kids));
  }

  Node try_statement() {
    std::vector<Node> kids{take()};
    kids.push_back(block(NodeKind::BlockStatement));
    if (!check("catch")) throw SyntaxFailure{};
    while (check("catch")) {
      std::vector<Node> clause{take()};
      clause.push_back(expect("("));
      if (check("...")) {
        clause.push_back(take());
      } else {
        std::vector<Node> param;
        Specifiers s = specifiers();
        for (Node& n : s.nodes) param.push_back(std::move(n));
        Declarator d = declarator(true);
        for (Node& n : d.pieces) param.push_back(std::move(n));
        if (param.empty()) throw SyntaxFailure{};
        clause.push_back(Node::branch(NodeKind::ParameterDeclaration, std::move(param)));
      }
      clause.push_back(expect(")"));
      clause.push_back(block(NodeKind::BlockStatement));
      kids.push_back(Node::branch(NodeKind::CatchClause, std::move(clause)));
    }
    return Node::branch(NodeKind::TryStatement, std::move(kids));
  }

  // ---- expressions ---------------------------------------------------------

  Node expression() {
    DepthGuard guard(depth_);
    Node lhs = assignment();
    while (check(",")) {
      std::vector<Node> kids{std::move(lhs)};
      kids.push_back(take());
      kids.push_back(assignment());
      lhs = Node::branch(NodeKind::BinaryOperation, std::move(kids));
    }
    return lhs;
  }

  Node assignment() {
    DepthGuard guard(depth_);
    Node lhs = conditional();
    if (peek().kind == TokenKind::op && is_assignment_op(peek().text)) {
      std::vector<Node> kids{std::move(lhs)};
      kids.push_back(take());
      kids.push_back(check("{") ? initializer() : assignment());
      return Node::branch(NodeKind::BinaryOperation, std::move(kids));
    }
    return lhs;
  }

  Node conditional() {
    DepthGuard guard(depth_);
    Node cond = binary(1);
    if (!check("?")) return cond;
    std::vector<Node> kids{std::move(cond)};
    kids.push_back(take());
    kids.push_back(expression());
    kids.push_back(expect(":"));
    kids.push_back(assignment());
    return Node::branch(NodeKind::TernaryExpression, std::move(kids));
  }

  Node binary(int min_precedence) {
    DepthGuard guard(depth_);
    Node lhs = unary();
    while (true) {
      const int prec = binary_precedence(peek());
      if (prec < min_precedence) break;
      std::vector<Node> kids{std::move(lhs)};
      kids.push_back(take());
      kids.push_back(binary(prec + 1));
      lhs = Node::branch(NodeKind::BinaryOperation, std::move(kids));
    }
    return lhs;
  }

  bool cast_ahead() const {
    if (!check("(")) return false;
    const Token& t = peek(1);
    if (t.kind == TokenKind::keyword) {
      return is_builtin_type_word(t.text) || is_record_word(t.text) || t.text == "const" || t.text == "volatile";
    }
    const auto end = scan_name(1);
    if (!end) return false;
    std::size_t i = *end;
    bool pointer = false;
    while (check("*", i) || check("&", i) || check("const", i)) {
      pointer = true;
      ++i;
    }
    if (!check(")", i)) return false;
    if (pointer) return true;
    const Token& after = peek(i + 1);
    if (after.kind == TokenKind::identifier || after.kind == TokenKind::integer ||
        after.kind == TokenKind::floating || after.kind == TokenKind::string || after.kind == TokenKind::character) {
      return true;
    }
    const std::string_view type_name = peek(*end - 1).text;
    return after.is("(") && type_name.size() > 2 && type_name.substr(type_name.size() - 2) == "_t";
  }

  void type_name(std::vector<Node>& kids) {
    Specifiers s = specifiers();
    if (!s.has_type && scan_name(0)) s.nodes.push_back(Node::branch(NodeKind::RecordType, {name()}));
    if (s.nodes.empty()) throw SyntaxFailure{};
    for (Node& n : s.nodes) kids.push_back(std::move(n));
    Declarator d = declarator(true);
    for (Node& n : d.pieces) kids.push_back(std::move(n));
  }

  Node unary() {
    DepthGuard guard(depth_);
    const Token& t = peek();
    if (t.kind == TokenKind::op &&
        (t.text == "++" || t.text == "--" || t.text == "+" || t.text == "-" || t.text == "!" || t.text == "~" ||
         t.text == "*" || t.text == "&" || t.text == "::")) {
      if (t.text == "::") return postfix(primary());
      std::vector<Node> kids{take()};
      kids.push_back(unary());
      return Node::branch(NodeKind::UnaryOperation, std::move(kids));
    }
    if (t.is("sizeof")) {
      std::vector<Node> kids{take()};
      if (check("(") && (starts_specifier(peek(1)) || cast_ahead())) {
        kids.push_back(take());
        type_name(kids);
        kids.push_back(expect(")"));
      } else {
        kids.push_back(unary());
      }
      return Node::branch(NodeKind::UnaryOperation, std::move(kids));
    }
    if (cast_ahead()) {
      std::vector<Node> kids{take()};
      type_name(kids);
      kids.push_back(expect(")"));
      kids.push_back(check("{") ? initializer() : unary());
      return Node::branch(NodeKind::CastExpression, std::move(kids));
    }
    return postfix(primary());
  }

  Node argument_list() {
    std::vector<Node> kids{expect("(")};
    while (!check(")")) {
      kids.push_back(assignment());
      if (!check(",")) break;
      kids.push_back(take());
    }
    kids.push_back(expect(")"));
    return Node::branch(NodeKind::ArgumentList, std::move(kids));
  }

  Node postfix(Node base) {
    while (true) {
      if (check("[")) {
        std::vector<Node> kids{std::move(base)};
        kids.push_back(take());
        kids.push_back(expression());
        kids.push_back(expect("]"));
        base = Node::branch(NodeKind::ArraySubscript, std::move(kids));
      } else if (check("(")) {
        std::vector<Node> kids{std::move(base)};
        kids.push_back(argument_list());
        base = Node::branch(NodeKind::MethodInvocation, std::move(kids));
      } else if (check(".") || check("->")) {
        std::vector<Node> kids{std::move(base)};
        kids.push_back(take());
        if (check("~")) kids.push_back(take());
        kids.push_back(expect_kind(TokenKind::identifier));
        base = Node::branch(NodeKind::MemberAccess, std::move(kids));
      } else if (check("++") || check("--")) {
        std::vector<Node> kids{std::move(base)};
        kids.push_back(take());
        base = Node::branch(NodeKind::UnaryOperation, std::move(kids));
      } else {
        return base;
      }
    }
  }

  Node primary() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::identifier:
        return name();
      case TokenKind::integer:
      case TokenKind::floating:
      case TokenKind::character:
        return take();
      case TokenKind::string: {
        std::vector<Node> parts{take()};
        while (check_kind(TokenKind::string) ||
               (check_kind(TokenKind::identifier) && check_kind(TokenKind::string, 1) && parts.size() > 0)) {
          parts.push_back(take());
        }
        if (parts.size() == 1) return std::move(parts.front());
        return Node::branch(NodeKind::ConcatenatedString, std::move(parts));
      }
      case TokenKind::keyword:
        if (t.text == "true" || t.text == "false" || t.text == "nullptr") return take();
        throw SyntaxFailure{};
      case TokenKind::op:
        if (t.text == "::") return name();
        throw SyntaxFailure{};
      case TokenKind::punct:
        if (t.text == "(") {
          std::vector<Node> kids{take()};
          kids.push_back(expression());
          kids.push_back(expect(")"));
          return Node::branch(NodeKind::ParenExpression, std::move(kids));
        }
        if (t.text == "[") return lambda();
        throw SyntaxFailure{};
      default:
        throw SyntaxFailure{};
    }
  }

  Node lambda() {
    std::vector<Node> kids{take()};
    while (!check("]")) {
      if (at_end() || check(";") || check("{")) throw SyntaxFailure{};
      kids.push_back(take());
    }
    kids.push_back(take());
    if (check("(")) kids.push_back(parameter_list());
    while (!check("{")) {
      if (at_end() || check(";")) throw SyntaxFailure{};
      kids.push_back(take());  // mutable, -> type
    }
    kids.push_back(block(NodeKind::BlockStatement));
    return Node::branch(NodeKind::LambdaExpression, std::move(kids));
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

bool declares_function(const Node& n) {
  if (n.kind == NodeKind::FunctionDefinition || n.kind == NodeKind::MethodDeclaration ||
      n.kind == NodeKind::ConstructorDeclaration) {
    return true;
  }
  if (n.kind == NodeKind::PackageDeclaration || n.kind == NodeKind::ClassDeclaration) {
    for (const Node& c : n.children) {
      if (declares_function(c)) return true;
    }
  }
  // Declarations wrapping a class body, e.g. `struct S { void f(); } s;`.
  for (const Node& c : n.children) {
    if (c.kind == NodeKind::ClassDeclaration && declares_function(c)) return true;
  }
  return false;
}

}  // namespace

SyntaxTree parse(std::string_view source) {
  Parser parser(source);
  if (parser.empty()) throw ParseError(ParseError::Reason::empty_input, "empty input: nothing to parse");
  std::vector<Node> items = parser.translation_unit();
  bool any_function = false;
  for (const Node& n : items) any_function = any_function || declares_function(n);
  if (!any_function) throw ParseError(ParseError::Reason::no_function, "no function found in input");
  Node root = items.size() == 1 && items.front().kind == NodeKind::FunctionDefinition
                  ? std::move(items.front())
                  : Node::branch(NodeKind::TranslationUnit, std::move(items));
  return SyntaxTree(std::move(root), std::string(source));
}

}  // namespace vulstyle
