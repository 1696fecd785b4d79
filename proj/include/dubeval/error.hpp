#ifndef DUBEVAL_ERROR_HPP
#define DUBEVAL_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace dubeval {

// Every failure raised by the library carries one of these kinds so callers
// (the CLI in particular) can map it to an exit code without string matching.
enum class ErrorKind {
  kFileNotFound,
  kUnsupportedFormat,
  kTruncated,
  kInvalidArgument,
  kDimensionMismatch,
  kLengthMismatch,
  kEmptyInput,
  kParse,
  kValidation,
  kIo,
};

inline std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFileNotFound: return "file_not_found";
    case ErrorKind::kUnsupportedFormat: return "unsupported_format";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kLengthMismatch: return "length_mismatch";
    case ErrorKind::kEmptyInput: return "empty_input";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace dubeval

#endif  // DUBEVAL_ERROR_HPP
