#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stepscale {

/// Inconsistent shapes, invalid bounds, unknown identifiers in a config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite activation, loss or parameter update. The harness turns this
/// into an infeasible trial.
class NumericOverflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API misuse, e.g. feeding a stale BatchCache to backward.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed binary input. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace stepscale
