#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ffrr {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: missing files, malformed records, invalid configuration.
/// The CLI maps these to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed line in a line-delimited file. `line` is 1-based.
class ParseError : public InputError {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : InputError(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

/// Shapes or indices that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Transport failure, malformed response or over-budget prompt from an oracle.
class OracleError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ffrr
