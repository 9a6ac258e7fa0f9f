#pragma once

#include <stdexcept>
#include <string>

namespace mlmprobe {

// Base of every error the toolkit raises. The CLI maps the subclasses onto
// exit codes: ConfigError/DataError -> 2, ProtocolError -> 3, AnalysisError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, missing paths, unusable output directory.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

// Scorer transport and wire-format failures.
class ProtocolError : public Error {
 public:
  ProtocolError(const std::string& what, bool retryable)
      : Error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

// Responses no longer line up with requests; the stream cannot be trusted.
class ProtocolDesync : public ProtocolError {
 public:
  explicit ProtocolDesync(const std::string& what) : ProtocolError(what, false) {}
};

// Metric preconditions that do not hold (undefined correlation, coverage
// mismatch between runs, missing gold labels, ...).
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace mlmprobe
