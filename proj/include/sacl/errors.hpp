#pragma once

#include <stdexcept>
#include <string>

namespace sacl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or otherwise invalid model input.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Innovation covariance indefinite, covariance lost PSD, or Phi ill-conditioned.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent wire message.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Scenario file failed validation.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

}  // namespace sacl
