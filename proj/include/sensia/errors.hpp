#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sensia {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a vector's norm is too small to normalize. `index` identifies
// the offending row (sentence, sense, occurrence) when the caller knows it.
class DegenerateVector : public std::runtime_error {
 public:
  explicit DegenerateVector(const std::string& what, std::size_t index = 0)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class InvalidToken : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class EmptySequence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidBatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Configuration problems; `key` names the offending configuration key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error(key + ": " + what), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, std::size_t step)
      : std::runtime_error("non-finite " + term + " at step " +
                           std::to_string(step)),
        term_(term),
        step_(step) {}
  const std::string& term() const { return term_; }
  std::size_t step() const { return step_; }

 private:
  std::string term_;
  std::size_t step_;
};

}  // namespace sensia
