#pragma once

#include <string_view>
#include <vector>

#include "vulstyle/syntax_tree.hpp"

namespace vulstyle {

enum class TokenKind {
  identifier,
  keyword,
  integer,
  floating,
  string,
  character,
  op,
  punct,
  unknown,
  end,
};

struct Token {
  TokenKind kind = TokenKind::end;
  Span span;
  std::string_view text;

  bool is(std::string_view s) const {
    return (kind == TokenKind::op || kind == TokenKind::punct || kind == TokenKind::keyword) && text == s;
  }
};

/// Splits C-like source into tokens. Comments and preprocessor lines are
/// skipped; unrecognized bytes become `unknown` tokens so lexing never fails.
/// The returned views point into `source`; the final token is always `end`.
std::vector<Token> lex(std::string_view source);

bool is_keyword(std::string_view word);

}  // namespace vulstyle
