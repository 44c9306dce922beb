#pragma once

#include <stdexcept>
#include <string>

namespace vulstyle {

enum class ErrorCode {
  invalid_argument,
  io,
  parse,
  schema,
  validation,
};

/// Base exception for every recoverable failure in the pipeline. The code
/// lets the CLI map failures onto distinct exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vulstyle
