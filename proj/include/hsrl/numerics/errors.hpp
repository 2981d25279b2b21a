#pragma once

#include <stdexcept>
#include <string>

namespace hsrl {

// Root of every error raised by the library. Each subclass corresponds to one
// failure family; the CLI maps families to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// An environment fault interrupted an episode; the partial episode is dropped.
class RolloutError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class VocabularyError : public DataError {
 public:
  VocabularyError(const std::string& what, std::size_t level)
      : DataError(what), level_(level) {}

  // 1-based level that could not be fitted.
  std::size_t level() const { return level_; }

 private:
  std::size_t level_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hsrl
