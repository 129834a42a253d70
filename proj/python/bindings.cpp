#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "adp/bench.hpp"
#include "adp/calibration.hpp"
#include "adp/errors.hpp"
#include "adp/estimators.hpp"
#include "adp/exact.hpp"
#include "adp/policy_search.hpp"
#include "adp/version.hpp"

namespace py = pybind11;
using namespace adp;

namespace {

est::EstimatorInputs inputs(const Eigen::MatrixXd& phi_prev, const Eigen::MatrixXd& phi_next,
                            const Eigen::VectorXd& contributions, double discount) {
  return {phi_prev, phi_next, contributions, discount};
}

// Dense MDP: transitions[a] is a states x states row-stochastic matrix, rewards is states x actions.
exact::DiscreteMdp dense_mdp(const std::vector<Eigen::MatrixXd>& transitions, const Eigen::MatrixXd& rewards,
                             double discount) {
  const auto states = static_cast<int>(rewards.rows());
  if (transitions.size() != static_cast<std::size_t>(rewards.cols())) {
    throw DimensionMismatch("one transition matrix per reward column is required");
  }
  auto b = exact::DiscreteMdp::Builder::flat(states, discount);
  for (int s = 0; s < states; ++s) {
    for (std::size_t a = 0; a < transitions.size(); ++a) {
      const auto& p = transitions[a];
      if (p.rows() != states || p.cols() != states) throw DimensionMismatch("transition matrices must be square");
      std::vector<exact::TransitionEntry> row;
      for (int t = 0; t < states; ++t) {
        if (p(s, t) != 0.0) row.push_back({t, p(s, t)});
      }
      b.add_action(s, rewards(s, static_cast<Eigen::Index>(a)), row);
    }
  }
  auto mdp = b.build();
  mdp.validate();
  return mdp;
}

std::string run_json(const std::string& config_json) {
  const auto config = bench::config_from_json(nlohmann::json::parse(config_json));
  const auto built = bench::build_problem(config);
  std::optional<exact::ExactSolution> solution;
  if (built.discrete) solution = bench::solve_exact(built);
  const auto report = bench::run_experiment(config, built, solution ? &*solution : nullptr);
  return bench::to_json(report).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Approximate dynamic programming benchmark for energy storage";
  m.attr("__version__") = kVersion;

  auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  (void)validation;

  m.def(
      "solve_bellman",
      [](const std::string& estimator, const Eigen::MatrixXd& phi_prev, const Eigen::MatrixXd& phi_next,
         const Eigen::VectorXd& contributions, double discount) {
        return est::solve_bellman(est::parse_estimator(estimator), inputs(phi_prev, phi_next, contributions, discount))
            .theta;
      },
      py::arg("estimator"), py::arg("phi_prev"), py::arg("phi_next"), py::arg("contributions"), py::arg("discount"),
      "Weights fitted by one of the Bellman-error estimators: LS, IV, LS-Projected or IV-Projected.");

  m.def(
      "solve_iv_regression",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& instruments) {
        return est::solve_iv_regression({x, y, instruments}).theta;
      },
      py::arg("x"), py::arg("y"), py::arg("instruments"));

  m.def(
      "value_iteration",
      [](const std::vector<Eigen::MatrixXd>& transitions, const Eigen::MatrixXd& rewards, double discount,
         double epsilon) {
        const auto mdp = dense_mdp(transitions, rewards, discount);
        const auto v = exact::value_iteration(mdp, {.epsilon = epsilon});
        return py::make_tuple(v.values, exact::extract_greedy_policy(mdp, v.values), v.iterations);
      },
      py::arg("transitions"), py::arg("rewards"), py::arg("discount"), py::arg("epsilon") = 1e-6,
      "Optimal values, greedy policy and sweep count for a dense MDP.");

  m.def(
      "policy_value",
      [](const std::vector<Eigen::MatrixXd>& transitions, const Eigen::MatrixXd& rewards, double discount,
         const std::vector<int>& policy) {
        return exact::exact_policy_value(dense_mdp(transitions, rewards, discount), policy);
      },
      py::arg("transitions"), py::arg("rewards"), py::arg("discount"), py::arg("policy"));

  m.def(
      "fit_ar1",
      [](const std::vector<double>& series) {
        const auto f = storage::fit_ar1(series);
        return py::dict(py::arg("mean") = f.mean, py::arg("coefficient") = f.coefficient,
                        py::arg("noise_variance") = f.noise_variance);
      },
      py::arg("series"));

  m.def(
      "fit_jump_diffusion",
      [](const std::vector<double>& log_prices) {
        const auto f = storage::fit_jump_diffusion(log_prices);
        return py::dict(py::arg("mean_reversion") = f.mean_reversion, py::arg("long_run_level") = f.long_run_level,
                        py::arg("volatility") = f.volatility, py::arg("jump_probability") = f.jump_probability,
                        py::arg("jump_sd") = f.jump_sd);
      },
      py::arg("log_prices"));

  m.def("expected_max_improvement", &search::expected_max_improvement, py::arg("intercepts"), py::arg("slopes"),
        "E[max_i a_i + b_i Z] - max_i a_i for a standard normal Z.");

  m.def(
      "kgcp",
      [](const std::vector<Eigen::VectorXd>& points, const std::vector<double>& observations,
         const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, double signal_variance,
         const Eigen::VectorXd& length_scales, double noise_variance, double prior_mean,
         const Eigen::VectorXd& candidate) {
        search::GpModel model{points, observations, {signal_variance, length_scales, noise_variance, prior_mean},
                              {lower, upper}};
        model.validate();
        return search::kgcp(model, candidate);
      },
      py::arg("points"), py::arg("observations"), py::arg("lower"), py::arg("upper"), py::arg("signal_variance"),
      py::arg("length_scales"), py::arg("noise_variance"), py::arg("prior_mean"), py::arg("candidate"));

  m.def("problem_ids", &bench::problem_ids);
  m.def(
      "problem_definition",
      [](const std::string& id, double scale) { return bench::to_json(bench::problem_definition(id, scale)).dump(); },
      py::arg("id"), py::arg("scale") = 1.0);
  m.def(
      "percent_of_optimal",
      [](const std::vector<double>& values, const std::vector<double>& optimal) {
        const auto r = bench::percent_of_optimal(values, optimal);
        return py::make_tuple(r.mean, r.used, r.excluded_zero_optimal);
      },
      py::arg("values"), py::arg("optimal"));
  m.def(
      "config_hash",
      [](const std::string& config_json) {
        return bench::config_hash(bench::config_from_json(nlohmann::json::parse(config_json)));
      },
      py::arg("config_json"));
  m.def("run_experiment", &run_json, py::arg("config_json"), py::call_guard<py::gil_scoped_release>(),
        "Builds the problem, solves it exactly when discrete, runs the method and returns the report JSON.");
  m.def(
      "summarize",
      [](const std::vector<std::string>& reports) {
        std::vector<nlohmann::json> parsed;
        for (const auto& r : reports) parsed.push_back(nlohmann::json::parse(r));
        const auto t = bench::summarize(parsed);
        return py::make_tuple(t.summary_csv, t.sweep_csv);
      },
      py::arg("reports"));
}
