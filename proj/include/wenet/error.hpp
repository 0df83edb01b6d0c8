#pragma once

#include <stdexcept>
#include <string>

namespace wenet {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A precondition on an argument's value was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes are incompatible for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An index or token id is out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// A text input (JSONL record, config line, vocab file) failed to parse.
class ParseError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared where finite arithmetic was required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Two evaluations of a supposedly deterministic function disagreed.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Checkpoint file is unreadable; kind() distinguishes the failure mode.
class CheckpointError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, Corrupt };

  CheckpointError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace wenet
