#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mter {

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Network topology problem: dangling node, missing adjacency, unreachable pair.
class StructuralError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Out-of-domain attribute or parameter value.
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Function evaluated outside its domain (negative mass, empty choice set).
class DomainError : public std::domain_error {
  using std::domain_error::domain_error;
};

/// Iterative solver ran out of iterations.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual, long iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
  double residual() const noexcept { return residual_; }
  long iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  long iterations_;
};

/// Linear solve breakdown or a residual check that failed.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace mter
