#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace adp::est {

using Eigen::Index;

// One batch of Bellman samples. Row i holds features of the post-decision state the
// sample started from, the features of the post-decision state it reached, and the
// contribution earned on the way.
struct EstimatorInputs {
  Eigen::MatrixXd phi_prev;
  Eigen::MatrixXd phi_next;
  Eigen::VectorXd contributions;
  double discount = 0.0;

  Index samples() const { return phi_prev.rows(); }
  Index features() const { return phi_prev.cols(); }
  // Throws DimensionMismatch / ValidationError.
  void validate() const;
};

struct WeightVector {
  Eigen::VectorXd theta;
};

// Errors-in-variables regression Y' = X' beta with instruments Z (same width as X').
struct IvRegressionProblem {
  Eigen::MatrixXd observed_x;
  Eigen::VectorXd observed_y;
  Eigen::MatrixXd instruments;

  void validate() const;
};

struct SolverOptions {
  // Relative numerical-rank tolerance; singular values at or below
  // tolerance * sigma_max count as zero. Defaults to max(rows, cols) * eps.
  std::optional<double> rank_tolerance;
  // Opt-in Tikhonov term; zero means no regularization.
  double ridge = 0.0;
};

enum class EstimatorKind { LeastSquares, InstrumentalVariables, LeastSquaresProjected, InstrumentalVariablesProjected };

std::string_view to_string(EstimatorKind kind);
// Accepts "ls", "iv", "ls-projected", "iv-projected" (case-insensitive).
EstimatorKind parse_estimator(std::string_view name);

WeightVector solve_ls_bellman(const EstimatorInputs& in, const SolverOptions& opts = {});
WeightVector solve_iv_bellman(const EstimatorInputs& in, const SolverOptions& opts = {});
WeightVector solve_ls_projected_bellman(const EstimatorInputs& in, const SolverOptions& opts = {});
WeightVector solve_iv_projected_bellman(const EstimatorInputs& in, const SolverOptions& opts = {});
WeightVector solve_bellman(EstimatorKind kind, const EstimatorInputs& in, const SolverOptions& opts = {});

// Orthogonal projection of every column of `target` onto span(phi_prev), computed
// from a thin QR factorization of phi_prev.
Eigen::MatrixXd apply_projection(const Eigen::MatrixXd& phi_prev, const Eigen::MatrixXd& target,
                                 const SolverOptions& opts = {});

WeightVector solve_iv_regression(const IvRegressionProblem& problem, const SolverOptions& opts = {});

struct MatrixRank {
  Index rank = 0;
  Index columns = 0;
  double largest_singular = 0.0;
  double smallest_singular = 0.0;
  double condition = 0.0;  // infinity when the smallest singular value is zero
  double threshold = 0.0;

  bool full_rank() const { return rank == columns; }
};

struct RankReport {
  MatrixRank phi_prev;
  MatrixRank bellman_difference;  // phi_prev - discount * phi_next
  MatrixRank cross_product;       // phi_prev^T (phi_prev - discount * phi_next)

  bool satisfied() const {
    return phi_prev.full_rank() && bellman_difference.full_rank() && cross_product.full_rank();
  }
};

MatrixRank numerical_rank(const Eigen::MatrixXd& m, std::optional<double> tolerance = {});
RankReport check_rank_assumptions(const EstimatorInputs& in, std::optional<double> tolerance = {});

}  // namespace adp::est
