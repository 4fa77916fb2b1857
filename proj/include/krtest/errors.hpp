#pragma once

#include <stdexcept>
#include <string>

namespace krtest {

// Base class for all harness errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// File unreadable / unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input bytes are not valid UTF-8; carries the offset of the first bad byte.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, size_t byte_offset)
      : Error(what), byte_offset(byte_offset) {}
  size_t byte_offset;
};

// A caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Unknown key (passage location, mock table entry, ...).
class LookupError : public Error {
 public:
  using Error::Error;
};

// Network-level failure, including retry exhaustion.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The remote endpoint answered but the exchange is unusable (4xx, bad body).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Endpoint cannot provide what the harness needs (e.g. token logprobs).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// No parsable JSON payload in a model reply; keeps the raw text for audit.
class PayloadParseError : public Error {
 public:
  PayloadParseError(const std::string& what, std::string raw)
      : Error(what), raw_text(std::move(raw)) {}
  std::string raw_text;
};

// A serialized file violates its schema; line is 1-based, 0 when unknown.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& what, size_t line = 0) : Error(what), line(line) {}
  size_t line;
};

// Token/char-offset alignment cannot place the continuation boundary.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration (missing paths, duplicate labels, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed; earlier artifacts are preserved.
class StageError : public Error {
 public:
  using Error::Error;
};

// Dataset-level evaluation could not produce a report (e.g. every tuple failed).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Reports cannot be compared (dataset fingerprints differ).
class ComparisonError : public Error {
 public:
  using Error::Error;
};

// A loaded value violates a declared invariant (accuracy outside [0,1], ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace krtest
