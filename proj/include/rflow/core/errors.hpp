#pragma once

#include <stdexcept>
#include <string>

namespace rflow {

/// A precondition on an operation's inputs was violated.
///
/// Optimizers treat this as an infeasible candidate; it never becomes a
/// reward value.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A workflow step failed. Carries the id of the failing step.
class StepError : public DomainError {
 public:
  StepError(std::string step, const std::string& what)
      : DomainError(step + ": " + what), step_(std::move(step)) {}

  const std::string& step() const noexcept { return step_; }

 private:
  std::string step_;
};

/// Spectrum has no peak that stands out; the image is not a lattice.
class NoLatticeError : public DomainError {
 public:
  NoLatticeError() : DomainError("no lattice detected") {}
};

/// Invalid run configuration (bad flags, pipeline/image mismatch, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rflow
