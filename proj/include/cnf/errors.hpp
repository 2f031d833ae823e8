#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cnf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, shapes or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A time or index outside the valid domain.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite cost or gradient.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  long epoch() const noexcept { return epoch_; }

 private:
  long epoch_;
};

/// Malformed input file; offset is the byte position where reading failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Well-formed file whose contents disagree with the declared shape.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cnf
