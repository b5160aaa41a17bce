#pragma once

#include <stdexcept>
#include <string>

namespace ocpad {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (dimensions, hyperparameters, margins).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched arguments to an operation.
class InputError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

/// Dataset text parse failure; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Binary checkpoint / GMM file failure.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace ocpad
