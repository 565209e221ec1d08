#pragma once

#include <stdexcept>
#include <string>

namespace oewt {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A required column is missing or an input file does not match its schema.
class SchemaError : public Error {
public:
  using Error::Error;
};

/// Input values violate a record invariant (non-finite entries, weights
/// below one, duplicate ids, empty datasets, ...).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Covariate dimension mismatch between datasets.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A sampling design is infeasible (certainty units, unattainable size
/// ratio, unbracketable intercept target).
class DesignError : public Error {
public:
  using Error::Error;
};

/// The data configuration makes a pseudo-likelihood unbounded, so no
/// maximizer exists.
class DegenerateError : public Error {
public:
  using Error::Error;
};

/// Linear algebra failure (singular system that a ridge fallback could not
/// rescue).
class NumericalError : public Error {
public:
  using Error::Error;
};

/// Bad CLI flags or configuration file contents.
class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace oewt
