#pragma once

#include <stdexcept>
#include <string>

namespace mfl {

// Argument outside the mathematical domain of an operation (negative tau, xi > 1, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A bound formula evaluated at one of its poles.
class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Every particle received zero likelihood; the posterior is undefined.
class DegenerateUpdateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The ensemble cannot produce two distinct hypotheses.
class DegenerateEnsembleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A spectrum without a peak above its noise floor.
class NoPeakError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mfl
