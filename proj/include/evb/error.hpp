#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace evb {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that is structurally valid but geometrically or numerically
/// degenerate (zero-norm quaternion, collinear points, empty frame, ...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed file or stream. Carries the file name and either a byte offset
/// (binary formats) or a 1-based line number (text formats).
class ParseError : public Error {
 public:
  enum class Kind {
    kTruncated,
    kBadMagic,
    kUnknownCameraModel,
    kDuplicateId,
    kDanglingReference,
    kInvalidValue,
    kSyntax,
    kIo,
  };

  ParseError(Kind kind, std::string file, std::optional<std::uint64_t> offset,
             std::optional<std::uint64_t> line, const std::string& message);

  Kind kind() const { return kind_; }
  const std::string& file() const { return file_; }
  std::optional<std::uint64_t> offset() const { return offset_; }
  std::optional<std::uint64_t> line() const { return line_; }

 private:
  Kind kind_;
  std::string file_;
  std::optional<std::uint64_t> offset_;
  std::optional<std::uint64_t> line_;
};

const char* to_string(ParseError::Kind kind);

}  // namespace evb
