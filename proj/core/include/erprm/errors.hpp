// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace erprm {

// Every error raised by the library derives from Error. The CLI maps the
// concrete type onto its exit code, so throw the most specific one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition of an operation was violated by its inputs.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Caller asked for an invalid combination of options.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed (bad JSON line, schema mismatch, unparseable text).
class DataError : public Error {
 public:
  using Error::Error;
};

// An intermediate value went non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Remote endpoint failed. Carries one entry per attempt made.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::vector<std::string> attempts, bool permanent = false)
      : Error(what), attempts_(std::move(attempts)), permanent_(permanent) {}

  const std::vector<std::string>& attempts() const noexcept { return attempts_; }
  // True for non-retryable failures (4xx other than 429).
  bool permanent() const noexcept { return permanent_; }

 private:
  std::vector<std::string> attempts_;
  bool permanent_;
};

}  // namespace erprm
