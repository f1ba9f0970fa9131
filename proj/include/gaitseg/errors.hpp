#pragma once

#include <stdexcept>
#include <string>

namespace gaitseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or preconditions that the caller was required to satisfy.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: hyperparameters, specs, incompatible checkpoints.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or physically invalid input data (files, trials, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A subject appears on both sides of a train/validation split.
class LeakageError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// CLI exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

}  // namespace gaitseg
