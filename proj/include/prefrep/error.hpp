#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prefrep {

// Bad input: dimension mismatch, unknown id, malformed file, violated
// precondition. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An iterative procedure failed to produce a usable result (non-finite loss,
// eigen-solver or equilibrium solver hit its iteration cap).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : NumericalError(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace prefrep
