#pragma once

#include <stdexcept>
#include <string>

namespace steerkit {

// Invalid arguments are reported with std::invalid_argument throughout. The
// types below cover failures that callers need to tell apart.

/// Malformed binary input (field files, checkpoints, IDX datasets).
class FormatError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, BadHeader, CountMismatch, Io };

  FormatError(Kind kind, std::string field, const std::string& what)
      : std::runtime_error(what), kind_(kind), field_(std::move(field)) {}

  Kind kind() const noexcept { return kind_; }
  /// Name of the offending header field ("magic", "version", "payload", ...).
  const std::string& field() const noexcept { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

/// Experiment configuration rejected during validation.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Non-finite value produced during forward or backward.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string layer, const std::string& what)
      : std::runtime_error(what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

}  // namespace steerkit
