#ifndef CORRMVS_ERROR_HPP_
#define CORRMVS_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace corrmvs
{

/// Coarse classification of every failure the library reports. The CLI maps
/// each kind onto a distinct process exit code.
enum class ErrorKind
{
  kInvalidPose,
  kInvalidDepth,
  kBehindCamera,
  kShape,
  kConfig,
  kIndex,
  kDegenerateGeometry,
  kNegativeDepth,
  kEmptyResult,
  kEmptyMask,
  kParse,
  kIo,
};

inline const char * to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::kInvalidPose: return "invalid-pose";
    case ErrorKind::kInvalidDepth: return "invalid-depth";
    case ErrorKind::kBehindCamera: return "behind-camera";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIndex: return "index";
    case ErrorKind::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorKind::kNegativeDepth: return "negative-depth";
    case ErrorKind::kEmptyResult: return "empty-result";
    case ErrorKind::kEmptyMask: return "empty-mask";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string & what)
  : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Parse failure carrying the location in the offending file: a byte offset
/// for binary formats, a 1-based line number for text formats.
class ParseError : public Error
{
public:
  enum class Unit { kByte, kLine };

  ParseError(const std::string & source, Unit unit, std::size_t location, const std::string & what)
  : Error(ErrorKind::kParse, describe(source, unit, location, what)),
    source_(source), unit_(unit), location_(location)
  {}

  const std::string & source() const noexcept { return source_; }
  Unit unit() const noexcept { return unit_; }
  std::size_t location() const noexcept { return location_; }

private:
  static std::string describe(
    const std::string & source, Unit unit, std::size_t location, const std::string & what)
  {
    return source + (unit == Unit::kByte ? " @ byte " : ":") + std::to_string(location) + ": " +
           what;
  }

  std::string source_;
  Unit unit_;
  std::size_t location_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string & what)
{
  throw Error(kind, what);
}

}  // namespace corrmvs

#endif  // CORRMVS_ERROR_HPP_
