#include "vulstyle/lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace vulstyle {
namespace {

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

// Longest first within each leading character.
constexpr std::array<std::string_view, 48> kOperators{
    "<<=", ">>=", "...", "->*", "::", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", ".*", "+",  "-",  "*",
    "/",   "%",   "<",   ">",   "=",  "!",  "~",  "&",  "|",  "^",  "?",  ":",  ".",  "(",
    ")",   "[",   "]",   "{",   "}",  ";"};

bool is_punct(std::string_view op) {
  return op == "(" || op == ")" || op == "[" || op == "]" || op == "{" || op == "}" || op == ";" ||
         op == "," || op == "...";
}

}  // namespace

bool is_keyword(std::string_view word) {
  static const std::unordered_set<std::string_view> keywords{
      "auto",     "break",    "case",      "char",     "const",    "continue", "default",
      "do",       "double",   "else",      "enum",     "extern",   "float",    "for",
      "goto",     "if",       "inline",    "int",      "long",     "register", "restrict",
      "return",   "short",    "signed",    "sizeof",   "static",   "struct",   "switch",
      "typedef",  "union",    "unsigned",  "void",     "volatile", "while",    "_Bool",
      "bool",     "class",    "namespace", "using",    "try",      "catch",    "throw",
      "public",   "private",  "protected", "true",     "false",    "nullptr",  "__inline",
      "__inline__", "__restrict", "virtual", "constexpr"};
  return keywords.contains(word);
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  const std::size_t n = src.size();
  bool line_start = true;

  auto push = [&](TokenKind kind, std::size_t begin, std::size_t end) {
    out.push_back(Token{kind, {begin, end}, src.substr(begin, end - begin)});
    line_start = false;
  };

  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(src[i]);
    if (c == '\n') {
      line_start = true;
      ++i;
      continue;
    }
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '#' && line_start) {
      // Preprocessor directive, honoring backslash continuations.
      while (i < n && src[i] != '\n') {
        if (src[i] == '\\' && i + 1 < n && src[i + 1] == '\n') ++i;
        ++i;
      }
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '/') {
      while (i < n && src[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && src[i + 1] == '*') {
      const std::size_t close = src.find("*/", i + 2);
      i = close == std::string_view::npos ? n : close + 2;
      continue;
    }

    const std::size_t begin = i;

    // String and character literals, with optional encoding prefix.
    std::size_t prefix = 0;
    if (c == 'L' || c == 'U' || c == 'u') {
      prefix = (c == 'u' && i + 1 < n && src[i + 1] == '8') ? 2 : 1;
      if (i + prefix >= n || (src[i + prefix] != '"' && src[i + prefix] != '\'')) prefix = 0;
    }
    if (c == '"' || c == '\'' || prefix > 0) {
      const char quote = src[i + prefix];
      std::size_t j = i + prefix + 1;
      while (j < n && src[j] != quote && src[j] != '\n') {
        if (src[j] == '\\' && j + 1 < n) ++j;
        ++j;
      }
      if (j < n && src[j] == quote) ++j;
      push(quote == '"' ? TokenKind::string : TokenKind::character, begin, j);
      i = j;
      continue;
    }

    if (ident_start(c)) {
      std::size_t j = i + 1;
      while (j < n && ident_char(static_cast<unsigned char>(src[j]))) ++j;
      const std::string_view word = src.substr(i, j - i);
      push(is_keyword(word) ? TokenKind::keyword : TokenKind::identifier, begin, j);
      i = j;
      continue;
    }

    if (std::isdigit(c) || (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      bool floating = false;
      std::size_t j = i;
      const bool hex = c == '0' && j + 1 < n && (src[j + 1] == 'x' || src[j + 1] == 'X');
      if (hex) j += 2;
      while (j < n) {
        const unsigned char d = static_cast<unsigned char>(src[j]);
        if (std::isalnum(d) || d == '_' || d == '\'') {
          if (!hex && (d == 'e' || d == 'E') && j + 1 < n && (src[j + 1] == '+' || src[j + 1] == '-')) {
            floating = true;
            j += 2;
            continue;
          }
          if (!hex && (d == 'e' || d == 'E')) floating = true;
          if (hex && (d == 'p' || d == 'P')) {
            floating = true;
            if (j + 1 < n && (src[j + 1] == '+' || src[j + 1] == '-')) ++j;
          }
          ++j;
        } else if (d == '.') {
          floating = true;
          ++j;
        } else {
          break;
        }
      }
      if (!hex && !floating) {
        const std::string_view lit = src.substr(i, j - i);
        if (lit.back() == 'f' || lit.back() == 'F') floating = lit.find_first_of("xX") == std::string_view::npos;
      }
      push(floating ? TokenKind::floating : TokenKind::integer, begin, j);
      i = j;
      continue;
    }

    bool matched = false;
    for (const std::string_view op : kOperators) {
      if (src.substr(i, op.size()) == op) {
        push(is_punct(op) ? TokenKind::punct : TokenKind::op, begin, i + op.size());
        i += op.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (c == ',') {
      push(TokenKind::punct, begin, i + 1);
      ++i;
      continue;
    }

    push(TokenKind::unknown, begin, i + 1);
    ++i;
  }
  out.push_back(Token{TokenKind::end, {n, n}, {}});
  return out;
}

}  // namespace vulstyle
