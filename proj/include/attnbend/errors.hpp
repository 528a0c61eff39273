#pragma once

#include <stdexcept>
#include <string>

namespace attnbend {

// Tensor or volume extents that do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad user-facing input: configuration fields, targets, ranges, flags.
// `path` names the offending field (e.g. "attention_bending_variations.operations[2].steps").
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path.empty() ? message : path + ": " + message),
        path_(std::move(path)),
        message_(message) {}
  explicit ConfigError(const std::string& message) : ConfigError(std::string{}, message) {}

  const std::string& path() const { return path_; }
  // The message without the path prefix.
  const std::string& message() const { return message_; }

 private:
  std::string path_;
  std::string message_;
};

}  // namespace attnbend
