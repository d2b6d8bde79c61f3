// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace badgnn {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch or an empty operand where a non-empty one is required.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf produced or observed where finite values are required.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Finite-difference probe hit a non-finite function value.
class ProbeError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(const std::string &what, std::size_t line)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// Rows disagree on the feature layout.
class SchemaError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// An event was applied before something that happened after it.
class TemporalOrderError : public Error {
public:
  using Error::Error;
};

/// Operation called in the wrong state (e.g. backward without a forward cache).
class StateError : public Error {
public:
  using Error::Error;
};

/// AP/AUC requested on a score set lacking positives or negatives.
class MetricError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

} // namespace badgnn
