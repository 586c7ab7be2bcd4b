#pragma once

#include <stdexcept>
#include <string>

namespace seev {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// The simplex engine lost numerical control (tiny pivots, or a witness that
/// fails re-substitution). Callers escalate; nothing downstream trusts it.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// No initial boundary activation set could be located from the samples.
class NotFound : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

class RegionBudgetExceeded : public BudgetExceeded {
 public:
  using BudgetExceeded::BudgetExceeded;
};

class HingeBudgetExceeded : public BudgetExceeded {
 public:
  using BudgetExceeded::BudgetExceeded;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace seev
