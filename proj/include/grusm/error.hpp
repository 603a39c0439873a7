#pragma once

#include <stdexcept>
#include <string>

namespace grusm {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid shapes, counts, or settings detected before any work starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or version-mismatched documents. what() names the offending field.
class ParseError : public Error {
 public:
  ParseError(const std::string& field, const std::string& message)
      : Error(field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Contract violations by the caller, e.g. stepping a finished episode.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Failures inside an environment (crashed subprocess, protocol violation).
class EnvError : public Error {
 public:
  using Error::Error;
};

}  // namespace grusm
