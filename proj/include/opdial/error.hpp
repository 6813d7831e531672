#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace opdial {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document (not valid JSON, truncated binary, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed document with a missing or mistyped field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// One or more dialogues violate data-model invariants.
class InvariantError : public Error {
 public:
  InvariantError(std::string what, std::vector<std::string> ids)
      : Error(std::move(what)), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Trivia pool for a movie has no unused entries left.
class PoolExhausted : public Error {
 public:
  using Error::Error;
};

// Scorer / annotator wire protocol violation.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace opdial
