#include "ssmnet/error.hpp"

namespace ssmnet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::TooShort: return "too short";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Length: return "length error";
    case ErrorKind::Argument: return "argument error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Degenerate: return "degenerate input";
    case ErrorKind::Version: return "version error";
    case ErrorKind::Corruption: return "corruption error";
    case ErrorKind::NotFound: return "file not found";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::UndefinedAuc: return "undefined AUC";
    case ErrorKind::Numerical: return "numerical failure";
  }
  return "error";
}

}  // namespace ssmnet
