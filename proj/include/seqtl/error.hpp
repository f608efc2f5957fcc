// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace seqtl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class EmptyEpisodeError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Record content that does not fit the channel schema (unknown category, wrong row width).
class SchemaMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Single-class labels where both classes are required (LR fitting, AUROC).
class DegenerateLabelsError : public Error {
 public:
  using Error::Error;
};

class NoSourceTasksError : public Error {
 public:
  using Error::Error;
};

class FilesystemError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqtl
