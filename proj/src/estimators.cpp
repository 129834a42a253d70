#include "adp/estimators.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "adp/errors.hpp"

namespace adp::est {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double default_tolerance(Index rows, Index cols) { return static_cast<double>(std::max(rows, cols)) * kEps; }

MatrixRank rank_from_singular_values(const Eigen::VectorXd& sv, Index columns, double relative_tol) {
  MatrixRank r;
  r.columns = columns;
  if (sv.size() == 0) return r;
  r.largest_singular = sv.maxCoeff();
  r.smallest_singular = sv.minCoeff();
  r.threshold = relative_tol * r.largest_singular;
  r.rank = (sv.array() > r.threshold).count();
  if (r.largest_singular == 0.0) r.rank = 0;
  // A wide matrix has fewer singular values than columns; the missing ones are zero.
  if (sv.size() < columns) r.smallest_singular = 0.0;
  r.condition = r.smallest_singular > 0.0 ? r.largest_singular / r.smallest_singular
                                          : std::numeric_limits<double>::infinity();
  return r;
}

[[noreturn]] void throw_rank(const char* what, const MatrixRank& r) {
  std::ostringstream msg;
  msg << what << " is rank deficient (rank " << r.rank << " of " << r.columns << ", condition " << r.condition
      << ")";
  throw RankDeficient(msg.str(), r.condition);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Least squares through one Householder QR; the singular values of R decide the rank.
Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const SolverOptions& opts,
                              const char* what) {
  const Index n = a.rows();
  const Index k = a.cols();
  Eigen::MatrixXd lhs;
  Eigen::VectorXd rhs;
  const bool ridge = opts.ridge > 0.0;
  if (ridge) {
    lhs.resize(n + k, k);
    lhs.topRows(n) = a;
    lhs.bottomRows(k) = std::sqrt(opts.ridge) * Eigen::MatrixXd::Identity(k, k);
    rhs = Eigen::VectorXd::Zero(n + k);
    rhs.head(n) = b;
  }
  const Eigen::MatrixXd& m = ridge ? lhs : a;
  const Eigen::VectorXd& y = ridge ? rhs : b;
  if (m.rows() < k) {
    throw_rank(what, rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues(), k, 0.0));
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const double tol = opts.rank_tolerance.value_or(default_tolerance(m.rows(), k));
  MatrixRank rank = rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues(), k, tol);
  if (!rank.full_rank()) throw_rank(what, rank);
  Eigen::VectorXd theta = qr.solve(y);
  if (!theta.allFinite()) throw_rank(what, rank);
  return theta;
}

// Square system from sums over `sample_rows` products; the tolerance scales with that count.
Eigen::VectorXd square_solve(Eigen::MatrixXd m, const Eigen::VectorXd& b, Index sample_rows,
                             const SolverOptions& opts, const char* what) {
  const Index k = m.cols();
  if (opts.ridge > 0.0) m.diagonal().array() += opts.ridge;
  const double tol = opts.rank_tolerance.value_or(default_tolerance(sample_rows, k));
  MatrixRank rank = rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues(), k, tol);
  if (!rank.full_rank()) throw_rank(what, rank);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  Eigen::VectorXd theta = lu.solve(b);
  if (!theta.allFinite()) throw_rank(what, rank);
  return theta;
}

Eigen::MatrixXd bellman_difference(const EstimatorInputs& in) { return in.phi_prev - in.discount * in.phi_next; }

}  // namespace

void EstimatorInputs::validate() const {
  const Index n = phi_prev.rows();
  const Index k = phi_prev.cols();
  if (k == 0 || n == 0) throw ValidationError("estimator inputs are empty");
  if (phi_next.rows() != n || phi_next.cols() != k) {
    throw DimensionMismatch("phi_next must match phi_prev in shape");
  }
  if (contributions.size() != n) throw DimensionMismatch("one contribution per sample row is required");
  if (k > n) throw ValidationError("need at least as many samples as features");
  if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("discount must lie in [0, 1)");
  if (!all_finite(phi_prev) || !all_finite(phi_next) || !contributions.allFinite()) {
    throw ValidationError("estimator inputs contain non-finite values");
  }
}

void IvRegressionProblem::validate() const {
  const Index n = observed_x.rows();
  const Index k = observed_x.cols();
  if (n == 0 || k == 0) throw ValidationError("regression inputs are empty");
  if (observed_y.size() != n || instruments.rows() != n) {
    throw DimensionMismatch("regression inputs must share a row count");
  }
  if (instruments.cols() != k) throw DimensionMismatch("need exactly one instrument per regressor");
  if (k > n) throw ValidationError("need at least as many rows as regressors");
}

std::string_view to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::LeastSquares: return "ls";
    case EstimatorKind::InstrumentalVariables: return "iv";
    case EstimatorKind::LeastSquaresProjected: return "ls-projected";
    case EstimatorKind::InstrumentalVariablesProjected: return "iv-projected";
  }
  return "?";
}

EstimatorKind parse_estimator(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(s.begin(), s.end(), '_', '-');
  if (s == "ls") return EstimatorKind::LeastSquares;
  if (s == "iv") return EstimatorKind::InstrumentalVariables;
  if (s == "ls-projected") return EstimatorKind::LeastSquaresProjected;
  if (s == "iv-projected") return EstimatorKind::InstrumentalVariablesProjected;
  throw ValidationError("unknown estimator '" + std::string(name) + "'");
}

WeightVector solve_ls_bellman(const EstimatorInputs& in, const SolverOptions& opts) {
  in.validate();
  return {least_squares(bellman_difference(in), in.contributions, opts, "phi_prev - discount * phi_next")};
}

WeightVector solve_iv_bellman(const EstimatorInputs& in, const SolverOptions& opts) {
  in.validate();
  const Eigen::MatrixXd diff = bellman_difference(in);
  Eigen::MatrixXd cross = in.phi_prev.transpose() * diff;
  Eigen::VectorXd rhs = in.phi_prev.transpose() * in.contributions;
  return {square_solve(std::move(cross), rhs, in.samples(), opts, "phi_prev^T (phi_prev - discount * phi_next)")};
}

WeightVector solve_ls_projected_bellman(const EstimatorInputs& in, const SolverOptions& opts) {
  in.validate();
  const Index k = in.features();
  Eigen::MatrixXd stacked(in.samples(), k + 1);
  stacked.leftCols(k) = bellman_difference(in);
  stacked.col(k) = in.contributions;
  const Eigen::MatrixXd projected = apply_projection(in.phi_prev, stacked, opts);
  return {least_squares(projected.leftCols(k), projected.col(k), opts, "projected Bellman difference")};
}

WeightVector solve_iv_projected_bellman(const EstimatorInputs& in, const SolverOptions& opts) {
  in.validate();
  const Index k = in.features();
  Eigen::MatrixXd stacked(in.samples(), k + 1);
  stacked.leftCols(k) = bellman_difference(in);
  stacked.col(k) = in.contributions;
  const Eigen::MatrixXd projected = apply_projection(in.phi_prev, stacked, opts);
  Eigen::MatrixXd cross = in.phi_prev.transpose() * projected.leftCols(k);
  Eigen::VectorXd rhs = in.phi_prev.transpose() * projected.col(k);
  return {square_solve(std::move(cross), rhs, in.samples(), opts, "phi_prev^T projected Bellman difference")};
}

WeightVector solve_bellman(EstimatorKind kind, const EstimatorInputs& in, const SolverOptions& opts) {
  switch (kind) {
    case EstimatorKind::LeastSquares: return solve_ls_bellman(in, opts);
    case EstimatorKind::InstrumentalVariables: return solve_iv_bellman(in, opts);
    case EstimatorKind::LeastSquaresProjected: return solve_ls_projected_bellman(in, opts);
    case EstimatorKind::InstrumentalVariablesProjected: return solve_iv_projected_bellman(in, opts);
  }
  throw ValidationError("unknown estimator kind");
}

Eigen::MatrixXd apply_projection(const Eigen::MatrixXd& phi_prev, const Eigen::MatrixXd& target,
                                 const SolverOptions& opts) {
  const Index n = phi_prev.rows();
  const Index k = phi_prev.cols();
  if (target.rows() != n) throw DimensionMismatch("projection target must have one row per sample");
  if (k == 0 || k > n) throw ValidationError("projection needs 0 < features <= samples");
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(phi_prev);
  Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const double tol = opts.rank_tolerance.value_or(default_tolerance(n, k));
  MatrixRank rank = rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues(), k, tol);
  if (!rank.full_rank()) throw_rank("phi_prev", rank);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
  return q * (q.transpose() * target);
}

WeightVector solve_iv_regression(const IvRegressionProblem& problem, const SolverOptions& opts) {
  problem.validate();
  Eigen::MatrixXd cross = problem.instruments.transpose() * problem.observed_x;
  Eigen::VectorXd rhs = problem.instruments.transpose() * problem.observed_y;
  return {square_solve(std::move(cross), rhs, problem.observed_x.rows(), opts, "Z^T X")};
}

MatrixRank numerical_rank(const Eigen::MatrixXd& m, std::optional<double> tolerance) {
  const Index rows = m.rows();
  const Index cols = m.cols();
  const double tol = tolerance.value_or(default_tolerance(rows, cols));
  if (rows > cols) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    return rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(r).singularValues(), cols, tol);
  }
  return rank_from_singular_values(Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues(), cols, tol);
}

RankReport check_rank_assumptions(const EstimatorInputs& in, std::optional<double> tolerance) {
  in.validate();
  RankReport report;
  const Eigen::MatrixXd diff = bellman_difference(in);
  report.phi_prev = numerical_rank(in.phi_prev, tolerance);
  report.bellman_difference = numerical_rank(diff, tolerance);
  const Eigen::MatrixXd cross = in.phi_prev.transpose() * diff;
  report.cross_product =
      numerical_rank(cross, tolerance.value_or(default_tolerance(in.samples(), in.features())));
  return report;
}

}  // namespace adp::est
