#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace beables {

/// Violated precondition: mismatched shapes, out-of-range parameters.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the domain of a formula (e.g. d = 1 in the scaling laws).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// NaN/Inf encountered during time evolution.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, std::int64_t step, double energy)
      : std::runtime_error(what), step_(step), energy_(energy) {}

  std::int64_t step() const { return step_; }
  double energy() const { return energy_; }

 private:
  std::int64_t step_;
  double energy_;
};

}  // namespace beables
