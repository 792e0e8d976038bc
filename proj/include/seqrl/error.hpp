#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace seqrl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Index out of range (action ids, axes, targets).
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in a state that does not allow it.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value detected in checked mode.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file. Carries the byte offset of the failure.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Invalid configuration: unknown key, type mismatch, unreadable file.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string key = {}, int line = 0)
      : Error(what), key_(std::move(key)), line_(line) {}

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

}  // namespace seqrl
