#pragma once

#include <stdexcept>
#include <string>

namespace tubuda {

/// Precondition or shape violation in a call.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing, unreadable or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or incompatible config combination.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value surfaced during training. `component()` names the
/// offending loss term.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string component, const std::string& what)
      : std::runtime_error(what), component_(std::move(component)) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

/// Training code tried to read a label it must never see.
class LabelAccessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace tubuda
