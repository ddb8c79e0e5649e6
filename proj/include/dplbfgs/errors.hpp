#pragma once

#include <stdexcept>
#include <string>

namespace dplbfgs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg, long line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_ = 0;
};

class CommError : public Error {
 public:
  using Error::Error;
};

// Workers disagreed on the collective being performed (length, kind, or
// rendezvous sequence).
class ProtocolError : public CommError {
 public:
  using CommError::CommError;
};

// A peer did not show up at a rendezvous in time (socket backend).
class TimeoutError : public CommError {
 public:
  using CommError::CommError;
};

// Raised on surviving workers when a peer failed mid-collective.
class AbortError : public CommError {
 public:
  using CommError::CommError;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace dplbfgs
