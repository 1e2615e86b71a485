#pragma once

#include <stdexcept>
#include <string>

namespace dxrank {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (message carries the line number where known).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operation attempted before required configuration exists.
class StateError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (alpha < 0, empty list, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Query a backend cannot serve (token outside vocabulary, ...).
class QueryError : public Error {
 public:
  using Error::Error;
};

// Remote backend unreachable or persistently failing.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// Remote response violates the wire schema or its invariants.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Prior cache keyed to a different provider or prompt.
class CacheInvalidError : public Error {
 public:
  using Error::Error;
};

// Bad command line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace dxrank
