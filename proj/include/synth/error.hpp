#pragma once

#include <stdexcept>
#include <string>

namespace synth {

// Base for every error raised by the pipeline. The CLI maps these to exit
// code 1; UsageError maps to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

// Transient failures of a remote service (unreachable, non-2xx). Callers may
// retry.
class RemoteUnavailable : public Error {
 public:
  using Error::Error;
};

// The remote answered, but the payload violates the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace synth
