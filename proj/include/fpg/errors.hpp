#ifndef FPG_ERRORS_HPP
#define FPG_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fpg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;

  /// Pipeline stage the error escaped from; empty outside the pipeline.
  const std::string& stage() const { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

 private:
  std::string stage_;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A gain or closed-loop matrix is not Schur stable where stability is required.
/// When raised from an iterative procedure, `iteration()` names the offending step.
class InstabilityError : public Error {
 public:
  explicit InstabilityError(const std::string& what, long iteration = -1)
      : Error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

/// Malformed numeric input (asymmetric covariance, non-finite entries, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver failed to converge.
class NoSolutionError : public Error {
 public:
  using Error::Error;
};

/// Second-moment matrix of the data is (numerically) singular.
class MomentDegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Stochastic training produced non-finite values.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Step size violates eta < 2/L.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fpg

#endif  // FPG_ERRORS_HPP
