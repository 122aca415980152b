#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kfp {

// A caller broke a documented precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or inconsistent user input (config values, trace contents, files).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// TPR or TNR requested where its Bayes denominator is zero.
class DegenerateChannel : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class EndOfTrace : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace kfp
