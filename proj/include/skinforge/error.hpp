#pragma once

#include <stdexcept>
#include <string>

namespace skinforge {

// Root of every exception thrown by the library. `kind()` is a stable short
// tag used by the CLI and the HTTP service when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define SKINFORGE_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& message) : Error(tag, message) {}     \
  };

SKINFORGE_DEFINE_ERROR(FileNotFound, "file_not_found")
SKINFORGE_DEFINE_ERROR(DecodeError, "decode_error")
SKINFORGE_DEFINE_ERROR(TooSmall, "too_small")
SKINFORGE_DEFINE_ERROR(IoError, "io_error")
SKINFORGE_DEFINE_ERROR(InvalidArgument, "invalid_argument")
SKINFORGE_DEFINE_ERROR(ShapeMismatch, "shape_mismatch")
SKINFORGE_DEFINE_ERROR(VersionMismatch, "version_mismatch")
SKINFORGE_DEFINE_ERROR(ChecksumError, "checksum_error")
SKINFORGE_DEFINE_ERROR(NonFiniteLoss, "non_finite_loss")
SKINFORGE_DEFINE_ERROR(EmptyCorpus, "empty_corpus")
SKINFORGE_DEFINE_ERROR(ScorerFailure, "scorer_failure")

#undef SKINFORGE_DEFINE_ERROR

}  // namespace skinforge
