#pragma once

#include <stdexcept>
#include <string>

namespace ecm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input validation.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NegativeRhs : public Error {
 public:
  using Error::Error;
};

class InvalidUtility : public Error {
 public:
  using Error::Error;
};

class OutOfDomain : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

// Numerical procedures.
class SamplingFailed : public Error {
 public:
  using Error::Error;
};

class Infeasible : public Error {
 public:
  using Error::Error;
};

class MaxActiveSetIters : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class NotStronglyConcave : public Error {
 public:
  using Error::Error;
};

class KktFailed : public Error {
 public:
  using Error::Error;
};

// Networks and distributed messages.
class Disconnected : public Error {
 public:
  using Error::Error;
};

class InvalidHelper : public Error {
 public:
  using Error::Error;
};

class MissingSummary : public Error {
 public:
  using Error::Error;
};

}  // namespace ecm
