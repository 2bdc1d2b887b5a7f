#pragma once

#include <stdexcept>
#include <string>

namespace mtcrf {

enum class ErrorKind {
  kEmptyTask,
  kSchemeViolation,
  kUnknownLabel,
  kColumnCountMismatch,
  kSizeExceedsCorpus,
  kAlignmentMismatch,
  kShapeMismatch,
  kLabelOutOfRange,
  kMissingCoupledLabels,
  kMissingCoupling,
  kWrongVariant,
  kTooLarge,
  kEmptyGrid,
  kNonFiniteLoss,
  kInvalidArgument,
  kFormat,
  kIo,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix, for re-throwing with added context.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace mtcrf
