#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace marketrank {

// Invalid sizes, mixtures, alpha out of range, unknown preset names.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Vector dimensions that do not line up with a model or catalog.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed JSONL input. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Corpus-level fits without enough data (propensity curve, value buckets).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss during optimization.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset evaluated under a different reward spec than it was built with.
class SpecMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace marketrank
