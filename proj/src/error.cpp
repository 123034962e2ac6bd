#include "evb/error.hpp"

#include <sstream>

namespace evb {

namespace {

std::string format_parse_error(ParseError::Kind kind, const std::string& file,
                               std::optional<std::uint64_t> offset,
                               std::optional<std::uint64_t> line,
                               const std::string& message) {
  std::ostringstream os;
  os << (file.empty() ? "<memory>" : file);
  if (line) os << ":" << *line;
  if (offset) os << " @byte " << *offset;
  os << ": " << to_string(kind) << ": " << message;
  return os.str();
}

}  // namespace

ParseError::ParseError(Kind kind, std::string file, std::optional<std::uint64_t> offset,
                       std::optional<std::uint64_t> line, const std::string& message)
    : Error(format_parse_error(kind, file, offset, line, message)),
      kind_(kind),
      file_(std::move(file)),
      offset_(offset),
      line_(line) {}

const char* to_string(ParseError::Kind kind) {
  switch (kind) {
    case ParseError::Kind::kTruncated: return "truncated";
    case ParseError::Kind::kBadMagic: return "bad-magic";
    case ParseError::Kind::kUnknownCameraModel: return "unknown-camera-model";
    case ParseError::Kind::kDuplicateId: return "duplicate-id";
    case ParseError::Kind::kDanglingReference: return "dangling-reference";
    case ParseError::Kind::kInvalidValue: return "invalid-value";
    case ParseError::Kind::kSyntax: return "syntax";
    case ParseError::Kind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace evb
