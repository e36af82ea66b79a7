#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gridcomp {

// Bad argument or inconsistent input data.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure of a numerical kernel. For Cholesky failures pivot() is the column
// at which the matrix stopped being positive definite.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, std::ptrdiff_t pivot = -1)
      : std::runtime_error(what), pivot_(pivot) {}
  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

// Malformed input text. line() is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg),
        file_(file),
        line_(line) {}
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Run configuration rejected by validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure or a corrupt / incompatible binary file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridcomp
