#include <doctest.h>

#include <Eigen/Dense>

#include "adp/errors.hpp"
#include "adp/estimators.hpp"
#include "support.hpp"

using namespace adp;
using namespace adp::est;
using adp::testing::gaussian_matrix;
using adp::testing::gaussian_vector;
using adp::testing::random_bellman_inputs;
using adp::testing::relative_difference;

namespace {

EstimatorInputs two_row_example() {
  EstimatorInputs in;
  in.phi_prev = Eigen::MatrixXd::Ones(2, 1);
  in.phi_next = Eigen::MatrixXd::Ones(2, 1);
  in.contributions = Eigen::VectorXd::Ones(2);
  in.discount = 0.5;
  return in;
}

// Minimum-norm least squares through a complete orthogonal decomposition, kept apart from the
// library's QR path.
Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return a.completeOrthogonalDecomposition().solve(b);
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("hand-computed one-feature example") {
    const auto in = two_row_example();
    CHECK(solve_ls_bellman(in).theta[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(solve_iv_bellman(in).theta[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(solve_ls_projected_bellman(in).theta[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(solve_iv_projected_bellman(in).theta[0] == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("least squares matches a pseudo-inverse oracle") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
      auto in = random_bellman_inputs(rng, 200, 4, 0.9);
      const Eigen::MatrixXd diff = in.phi_prev - in.discount * in.phi_next;
      const Eigen::VectorXd oracle = pinv_solve(diff, in.contributions);
      const Eigen::VectorXd theta = solve_ls_bellman(in).theta;
      CHECK(relative_difference(theta, oracle) < 1e-10);
      const Eigen::VectorXd residual = in.contributions - diff * theta;
      CHECK((diff.transpose() * residual).cwiseAbs().maxCoeff() < 1e-8 * in.contributions.norm() * diff.norm());
    }
  }

  TEST_CASE("instrumental variables matches a direct linear solve") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      auto in = random_bellman_inputs(rng, 150, 5, 0.999);
      const Eigen::MatrixXd m = in.phi_prev.transpose() * (in.phi_prev - in.discount * in.phi_next);
      const Eigen::VectorXd oracle = m.colPivHouseholderQr().solve(in.phi_prev.transpose() * in.contributions);
      CHECK(relative_difference(solve_iv_bellman(in).theta, oracle) < 1e-9);
    }
  }

  TEST_CASE("zero discount collapses every estimator to ordinary least squares") {
    Rng rng(13);
    for (int rep = 0; rep < 20; ++rep) {
      auto in = random_bellman_inputs(rng, testing::uniform_int(rng, 20, 300), testing::uniform_int(rng, 2, 8), 0.0);
      const Eigen::VectorXd ols = pinv_solve(in.phi_prev, in.contributions);
      for (auto kind : {EstimatorKind::LeastSquares, EstimatorKind::InstrumentalVariables,
                        EstimatorKind::LeastSquaresProjected, EstimatorKind::InstrumentalVariablesProjected}) {
        CHECK(relative_difference(solve_bellman(kind, in).theta, ols) < 1e-10);
      }
    }
  }

  TEST_CASE("projected and instrumental estimators coincide on full-rank data") {
    Rng rng(14);
    const double discounts[] = {0.0, 0.5, 0.9, 0.999};
    for (int rep = 0; rep < 100; ++rep) {
      const double g = discounts[rep % 4];
      auto in = random_bellman_inputs(rng, testing::uniform_int(rng, 50, 500), testing::uniform_int(rng, 2, 10), g);
      const Eigen::VectorXd iv = solve_iv_bellman(in).theta;
      CHECK(relative_difference(solve_ls_projected_bellman(in).theta, iv) < 1e-8);
      CHECK(relative_difference(solve_iv_projected_bellman(in).theta, iv) < 1e-8);
    }
  }

  TEST_CASE("plain least squares differs once next-state features are noisy") {
    Rng rng(15);
    int differ = 0;
    const int total = 100;
    for (int rep = 0; rep < total; ++rep) {
      auto in = random_bellman_inputs(rng, 200, 4, 0.9, 0.5);
      if (relative_difference(solve_ls_bellman(in).theta, solve_iv_bellman(in).theta) > 1e-6) ++differ;
    }
    CHECK(differ >= 95);
  }

  TEST_CASE("square invertible features give the exact Bellman solution") {
    Rng rng(16);
    auto in = random_bellman_inputs(rng, 5, 5, 0.7);
    const Eigen::MatrixXd diff = in.phi_prev - in.discount * in.phi_next;
    const Eigen::VectorXd exact = diff.fullPivLu().solve(in.contributions);
    CHECK(relative_difference(solve_ls_projected_bellman(in).theta, exact) < 1e-9);
  }

  TEST_CASE("projection is symmetric, idempotent and fixes the basis") {
    Rng rng(17);
    const Eigen::MatrixXd phi = gaussian_matrix(rng, 60, 4);
    CHECK((apply_projection(phi, phi) - phi).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd target = gaussian_matrix(rng, 60, 3);
    const Eigen::MatrixXd once = apply_projection(phi, target);
    CHECK((apply_projection(phi, once) - once).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd pi = apply_projection(phi, Eigen::MatrixXd::Identity(60, 60));
    CHECK((pi - pi.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    // Component orthogonal to the column space is annihilated.
    const Eigen::MatrixXd ortho = target - once;
    CHECK(apply_projection(phi, ortho).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("rank report") {
    Rng rng(18);
    Eigen::MatrixXd phi = gaussian_matrix(rng, 100, 5);
    CHECK(numerical_rank(phi).rank == 5);
    phi.col(4) = phi.col(1);
    CHECK(numerical_rank(phi).rank == 4);

    EstimatorInputs in;
    in.phi_prev = Eigen::MatrixXd::Identity(3, 3);
    in.phi_next = Eigen::MatrixXd::Zero(3, 3);
    in.contributions = Eigen::VectorXd::Ones(3);
    in.discount = 0.0;
    const auto report = check_rank_assumptions(in);
    CHECK(report.satisfied());
    CHECK(report.phi_prev.condition == doctest::Approx(1.0));
  }

  TEST_CASE("singular systems raise RankDeficient") {
    Rng rng(19);
    auto in = random_bellman_inputs(rng, 50, 3, 0.5);
    in.phi_prev.col(2) = in.phi_prev.col(1);
    in.phi_next.col(2) = in.phi_next.col(1);
    CHECK_THROWS_AS(solve_ls_bellman(in), RankDeficient);
    CHECK_THROWS_AS(solve_iv_bellman(in), RankDeficient);
    CHECK_THROWS_AS(solve_ls_projected_bellman(in), RankDeficient);
    CHECK_THROWS_AS(solve_iv_projected_bellman(in), RankDeficient);
    CHECK_FALSE(check_rank_assumptions(in).satisfied());
  }

  TEST_CASE("indefinite instrumental system still solves") {
    // phi_prev^T (phi_prev - g phi_next) with phi_next far larger than phi_prev has
    // negative eigenvalues.
    Rng rng(20);
    auto in = random_bellman_inputs(rng, 300, 3, 0.9);
    in.phi_next = 5.0 * in.phi_prev + gaussian_matrix(rng, 300, 3, 0.1);
    const Eigen::MatrixXd m = in.phi_prev.transpose() * (in.phi_prev - in.discount * in.phi_next);
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff() < 0.0);
    const Eigen::VectorXd theta = solve_iv_bellman(in).theta;
    CHECK((m * theta - in.phi_prev.transpose() * in.contributions).norm() < 1e-8 * m.norm() * theta.norm());
  }

  TEST_CASE("ridge is opt-in") {
    Rng rng(21);
    auto in = random_bellman_inputs(rng, 80, 3, 0.5);
    const auto plain = solve_iv_bellman(in).theta;
    SolverOptions opts;
    opts.ridge = 10.0;
    CHECK(relative_difference(solve_iv_bellman(in, opts).theta, plain) > 1e-6);
  }

  TEST_CASE("input validation") {
    auto in = two_row_example();
    in.contributions = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(solve_iv_bellman(in), DimensionMismatch);
    in = two_row_example();
    in.discount = 1.0;
    CHECK_THROWS_AS(solve_iv_bellman(in), ValidationError);
    in = two_row_example();
    in.phi_prev = Eigen::MatrixXd::Ones(2, 3);
    in.phi_next = Eigen::MatrixXd::Ones(2, 3);
    CHECK_THROWS_AS(solve_iv_bellman(in), ValidationError);
    CHECK(parse_estimator("IV-Projected") == EstimatorKind::InstrumentalVariablesProjected);
    CHECK_THROWS_AS(parse_estimator("lasso"), ValidationError);
  }

  TEST_CASE("instrumental regression recovers the slope without noise") {
    Rng rng(22);
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 1.5, -2.0, 0.25).finished();
    IvRegressionProblem p;
    p.observed_x = gaussian_matrix(rng, 40, 3);
    p.observed_y = p.observed_x * beta;
    p.instruments = p.observed_x;
    CHECK(relative_difference(solve_iv_regression(p).theta, beta) < 1e-10);
  }

  TEST_CASE("instrumental regression removes attenuation bias") {
    Rng rng(23);
    const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 2.0);
    const int n = 100000;
    Eigen::MatrixXd x = gaussian_matrix(rng, n, 1);
    IvRegressionProblem p;
    p.observed_x = x + gaussian_matrix(rng, n, 1, 0.5);
    p.observed_y = x * beta + gaussian_vector(rng, n, 0.1);
    p.instruments = x;
    const double iv_error = std::abs(solve_iv_regression(p).theta[0] - 2.0);
    const double ols = pinv_solve(p.observed_x, p.observed_y)[0];
    // Attenuation factor var(x) / (var(x) + var(noise)) = 1 / 1.25.
    CHECK(ols == doctest::Approx(2.0 / 1.25).epsilon(0.02));
    CHECK(iv_error < 0.02);
    CHECK(std::abs(ols - 2.0) > 5.0 * iv_error);
  }

  TEST_CASE("instrumental regression error shrinks with sample size") {
    const Eigen::VectorXd beta = (Eigen::VectorXd(3) << 1.0, -0.5, 2.0).finished();
    std::vector<double> medians;
    for (int n : {1000, 10000, 100000}) {
      std::vector<double> errors;
      for (int seed = 0; seed < 50; ++seed) {
        Rng rng = make_stream(static_cast<std::uint64_t>(seed), {99, static_cast<std::uint64_t>(n)});
        auto s = testing::errors_in_variables(rng, n, beta);
        IvRegressionProblem p{s.observed_x, s.observed_y, s.instruments};
        errors.push_back((solve_iv_regression(p).theta - beta).norm() / beta.norm());
      }
      medians.push_back(testing::median(errors));
    }
    CHECK(medians[1] <= medians[0]);
    CHECK(medians[2] <= medians[1]);
    CHECK(medians[2] < 0.02);
  }
}
