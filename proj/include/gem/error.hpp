#pragma once

#include <stdexcept>
#include <string>

namespace gem {

enum class ErrorCode {
  Syntax,
  Usage,
  Io,
  InvalidProgram,
  UnknownSwitch,
  NonGround,
  Instantiation,
  Type,
  DepthExceeded,
  EnumerationCap,
  AcyclicSupport,
  ZeroProbability,
  NumericDegeneracy,
  EmptySupport,
  UniquenessViolation,
  InvalidModel,
};

/// Machine-greppable token for an error code, e.g. `E_ZERO_PROB`.
const char* code_token(ErrorCode code);

/// All engine failures. Messages name the offending atom or switch.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const { return code_; }
  [[nodiscard]] const char* token() const { return code_token(code_); }

 private:
  ErrorCode code_;
};

}  // namespace gem
