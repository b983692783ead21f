#pragma once

#include <stdexcept>
#include <string>

namespace tivp {

// Base class for all errors thrown by the toolkit.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Inversion of a (numerically) singular second-order tensor or matrix.
class SingularMatrixError : public Error {
public:
  using Error::Error;
};

// Material parameters violate their admissibility conditions.
class InvalidMaterialError : public Error {
public:
  using Error::Error;
};

// Deformation state is inadmissible (e.g. det F <= 0).
class InvalidDeformationError : public Error {
public:
  using Error::Error;
};

// Plastic flow direction undefined (equivalent stress is zero).
class SingularNormalError : public Error {
public:
  using Error::Error;
};

// The current integration step cannot be completed (Newton failure,
// singular Pade denominator, ...). The caller is expected to cut the
// time step and retry.
class StepRejectionError : public Error {
public:
  using Error::Error;
};

// Config file / command line problems. CLI maps this to exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Input data problems (malformed tables, insufficient calibration data).
class DataError : public Error {
public:
  using Error::Error;
};

// Yield-point extraction failed (no knee found, curve too short, ...).
class ExtractionError : public Error {
public:
  using Error::Error;
};

} // namespace tivp
