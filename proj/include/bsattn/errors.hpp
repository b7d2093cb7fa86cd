#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsattn {

// Malformed arguments: shape mismatches, empty inputs, non-finite values.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A cache or stream state that does not belong to the call it is passed to.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Inconsistent model / mode / band configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Binary file that does not follow the BSAT / BSAF layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleError : public std::runtime_error {
 public:
  OracleError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace bsattn
