#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace adp {

// Bad input or configuration. The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical routine could not produce a trustworthy answer. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class RankDeficient : public NumericalError {
 public:
  RankDeficient(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  double condition_estimate() const { return condition_; }

 private:
  double condition_;
};

class NoFeasibleAction : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Raised by the API loop; carries the last weights that were successfully estimated.
class EstimatorFailed : public NumericalError {
 public:
  EstimatorFailed(int iteration, std::string cause, Eigen::VectorXd last_weights)
      : NumericalError("estimator failed at iteration " + std::to_string(iteration) + ": " + cause),
        iteration_(iteration),
        cause_(std::move(cause)),
        last_weights_(std::move(last_weights)) {}
  int iteration() const { return iteration_; }
  const std::string& cause() const { return cause_; }
  const Eigen::VectorXd& last_weights() const { return last_weights_; }

 private:
  int iteration_;
  std::string cause_;
  Eigen::VectorXd last_weights_;
};

class NotConverged : public NumericalError {
 public:
  NotConverged(int iterations, double residual)
      : NumericalError("value iteration did not converge after " + std::to_string(iterations) +
                       " sweeps (residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class SolveFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IllConditionedKernel : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// The policy-search objective failed; carries the parameter vector it was evaluated at.
class ObjectiveFailed : public NumericalError {
 public:
  ObjectiveFailed(const std::string& what, Eigen::VectorXd theta) : NumericalError(what), theta_(std::move(theta)) {}
  const Eigen::VectorXd& theta() const { return theta_; }

 private:
  Eigen::VectorXd theta_;
};

class InfeasibleFlow : public ValidationError {
 public:
  explicit InfeasibleFlow(std::string constraint)
      : ValidationError("infeasible flow: " + constraint), constraint_(std::move(constraint)) {}
  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

class ParameterMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateSeries : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyBucket : public ValidationError {
 public:
  EmptyBucket(const std::string& kind, int index)
      : ValidationError("no observations in " + kind + " bucket " + std::to_string(index)),
        index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class DataFormatError : public ValidationError {
 public:
  DataFormatError(const std::string& what, long line)
      : ValidationError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class UnknownProblem : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingExactSolution : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace adp
