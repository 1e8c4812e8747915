#pragma once

#include <stdexcept>
#include <string>

namespace flowstyle {

enum class ErrorCode {
  InvalidArgument = 1,
  Io,
  BadMagic,
  VersionUnsupported,
  ShapeMismatch,
  TruncatedFile,
  TrailingData,
  UnknownLayer,
  SizeMismatch,
  ImageTooSmall,
  EmptyMask,
  AllTermsZero,
  NonFiniteEnergy,
  ChannelMismatch,
  EmptySequence,
  LengthMismatch,
  MissingFrame,
  FlowUnavailable,
  ParseError,
};

const char* to_string(ErrorCode code);

// Every failure in the core is reported through this exception; the C API
// maps `code()` onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace flowstyle
