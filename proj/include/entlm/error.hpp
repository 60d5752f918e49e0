#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace entlm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (JSONL line, generated stream, config file).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}
  // Line number (1-based) for file inputs, byte offset for streams.
  std::size_t location() const { return location_; }

 private:
  std::size_t location_;
};

// Well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition of an operation.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Embedding provider unreachable or returned a bad response.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Persisted file is truncated, corrupt, or incompatible.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Persisted file written by an incompatible format version.
class VersionError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

// Checkpoint and tokenizer disagree.
class VocabMismatchError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Training loss ran away.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace entlm
