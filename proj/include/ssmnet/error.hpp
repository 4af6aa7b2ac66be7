#pragma once

#include <stdexcept>
#include <string>

namespace ssmnet {

enum class ErrorKind {
  Format,        // malformed container / bad magic
  Unsupported,   // valid container, unsupported codec or layout
  EmptyInput,
  TooShort,
  Validation,
  Parse,
  Length,        // truncated payload
  Argument,
  Shape,
  Config,
  Domain,
  Degenerate,
  Version,
  Corruption,
  NotFound,
  Io,
  UndefinedAuc,
  Numerical,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ssmnet
