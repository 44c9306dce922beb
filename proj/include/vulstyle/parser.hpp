#pragma once

#include <string>
#include <string_view>

#include "vulstyle/error.hpp"
#include "vulstyle/syntax_tree.hpp"

namespace vulstyle {

class ParseError : public Error {
 public:
  enum class Reason { empty_input, no_function };

  ParseError(Reason reason, const std::string& what) : Error(ErrorCode::parse, what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

/// Parses a C-like function (or a sequence of top-level declarations) into a
/// syntax tree. The root is the FunctionDefinition itself when the input is a
/// single function, otherwise a TranslationUnit.
///
/// Regions the grammar cannot handle become ErrorNode subtrees holding the
/// skipped tokens; parsing only fails when the input is empty or contains no
/// function at all.
SyntaxTree parse(std::string_view source);

}  // namespace vulstyle
