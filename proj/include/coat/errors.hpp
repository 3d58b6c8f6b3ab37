#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coat {

// Precondition violations on public operations.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The synthetic generator could not produce a sample within its retry budget.
class GenerationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A reasoning primitive was applied to a value it is not defined on.
class ChainExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Text that does not follow a grammar; carries the byte offset (or line) of the failure.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// No same-concept demonstration is available for a predicted sample.
class NoDemonstrations : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a NaN/Inf loss.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace coat
