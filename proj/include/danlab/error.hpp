#pragma once

#include <stdexcept>
#include <string>

namespace danlab {

// Mirrors danlab_status in the C API. Values 1..3 double as CLI exit codes.
enum class ErrorCode : int {
  kOk = 0,
  kConfig = 1,
  kNumerical = 2,
  kOracle = 3,
  kFormat = 4,
  kIo = 5,
  kShape = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Invalid configuration or arguments (including dimension constraints).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

// Divergence, non-finite values, invalid densities, singular matrices.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorCode::kNumerical, what) {}
};

class OracleError : public Error {
 public:
  explicit OracleError(const std::string& what) : Error(ErrorCode::kOracle, what) {}
};

// Malformed binary file. offset is the byte position where reading failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(ErrorCode::kFormat, what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::kShape, what) {}
};

}  // namespace danlab
