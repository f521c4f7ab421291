#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cityalign {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's domain (out-of-range pixel, empty input,
// query outside a grid).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Geometrically degenerate input: zero-area polygon, point at the camera
// center.
class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what, std::ptrdiff_t index = -1)
      : Error(what), index_(index) {}
  // Offending element, -1 when not applicable.
  std::ptrdiff_t index() const { return index_; }

 private:
  std::ptrdiff_t index_;
};

// Malformed file contents. line() is 1-based, 0 when unknown.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// No TERRAIN polygon under a queried location.
class NotCoveredError : public Error {
 public:
  using Error::Error;
};

// Least-squares system has no unique solution.
class RankDeficiencyError : public Error {
 public:
  using Error::Error;
};

// Too few observations for an estimator.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Iterative method failed to converge; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_x, double last_y, double residual)
      : Error(what), last_x_(last_x), last_y_(last_y), residual_(residual) {}
  double last_x() const { return last_x_; }
  double last_y() const { return last_y_; }
  double residual() const { return residual_; }

 private:
  double last_x_;
  double last_y_;
  double residual_;
};

}  // namespace cityalign
