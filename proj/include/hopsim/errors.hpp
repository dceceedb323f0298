#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hopsim {

/// Malformed or inconsistent arguments (dimension mismatch, out-of-range values).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Joint action space too large to enumerate.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The equilibrium solver found nothing in the requested mode.
class SolverIncomplete : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal state contradicts its inputs (e.g. a zero-probability arm was played).
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Operation invoked out of order.
class SequencingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Expected information from other radars is missing.
class CommunicationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration text could not be parsed.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, std::string field, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + (field.empty() ? "" : " (" + field + ")") +
                           ": " + message),
        line_(line),
        field_(std::move(field)) {}

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int line_;
  std::string field_;
};

/// One or more invariants violated; carries every failure, not just the first.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> failures)
      : std::runtime_error(join(failures)), failures_(std::move(failures)) {}

  const std::vector<std::string>& failures() const noexcept { return failures_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out = "validation failed:";
    for (const auto& s : items) out += "\n  - " + s;
    return out;
  }

  std::vector<std::string> failures_;
};

}  // namespace hopsim
