#include "adp/mdp.hpp"

#include <cmath>
#include <numeric>

#include "adp/errors.hpp"

namespace adp::mdp {

std::vector<Action> feasible_actions(const MdpInterface& mdp, const PreState& pre) {
  std::vector<Action> out;
  mdp.feasible_actions(pre, out);
  return out;
}

int BasisSpec::feature_count() const {
  const int d = static_cast<int>(dimensions.size());
  return degree == 1 ? 1 + d : 1 + d + d * (d + 1) / 2;
}

void BasisSpec::validate() const {
  if (degree != 1 && degree != 2) throw ValidationError("basis degree must be 1 or 2");
  if (scaling.size() != dimensions.size()) throw DimensionMismatch("one scaling entry per basis dimension");
  if (dimensions.size() > static_cast<std::size_t>(kMaxStateDims)) throw ValidationError("too many basis dimensions");
  for (std::size_t i = 0; i < dimensions.size(); ++i) {
    if (dimensions[i] < 0 || dimensions[i] >= kMaxStateDims) throw ValidationError("basis dimension out of range");
    if (!(scaling[i].upper > scaling[i].lower)) throw ValidationError("basis scaling needs upper > lower");
  }
}

namespace {

// Scaled coordinates; returns their count.
int scaled_coordinates(const BasisSpec& basis, const State& post, double* s) {
  const int d = static_cast<int>(basis.dimensions.size());
  for (int i = 0; i < d; ++i) {
    const int dim = basis.dimensions[static_cast<std::size_t>(i)];
    if (dim >= post.coords.size()) throw DimensionMismatch("state has fewer coordinates than the basis expects");
    const auto& sc = basis.scaling[static_cast<std::size_t>(i)];
    s[i] = (post.coords[dim] - sc.lower) / (sc.upper - sc.lower);
  }
  return d;
}

}  // namespace

void evaluate_basis_into(const BasisSpec& basis, const State& post, FeatureRow out) {
  if (out.size() != basis.feature_count()) throw DimensionMismatch("feature buffer has the wrong length");
  double s[kMaxStateDims];
  const int d = scaled_coordinates(basis, post, s);
  Eigen::Index k = 0;
  out(k++) = 1.0;
  for (int i = 0; i < d; ++i) out(k++) = s[i];
  if (basis.degree == 2) {
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) out(k++) = s[i] * s[j];
    }
  }
}

Eigen::VectorXd evaluate_basis(const BasisSpec& basis, const State& post) {
  Eigen::RowVectorXd row(basis.feature_count());
  evaluate_basis_into(basis, post, row);
  return row.transpose();
}

double basis_value(const BasisSpec& basis, const Eigen::VectorXd& theta, const State& post) {
  if (theta.size() != basis.feature_count()) throw DimensionMismatch("weights and basis disagree in length");
  double s[kMaxStateDims];
  const int d = scaled_coordinates(basis, post, s);
  Eigen::Index k = 0;
  double acc = theta(k++);
  for (int i = 0; i < d; ++i) acc += theta(k++) * s[i];
  if (basis.degree == 2) {
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) acc += theta(k++) * s[i] * s[j];
    }
  }
  return acc;
}

void GreedyPolicy::validate() const {
  basis.validate();
  if (weights.theta.size() != basis.feature_count()) throw DimensionMismatch("weights and basis disagree in length");
  if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("discount must lie in [0, 1)");
}

GreedyPolicy myopic_policy(const BasisSpec& basis, double discount) {
  basis.validate();
  return GreedyPolicy{{Eigen::VectorXd::Zero(basis.feature_count())}, basis, discount};
}

Decision greedy_decision(const GreedyPolicy& policy, const MdpInterface& mdp, const PreState& pre,
                         std::vector<Action>& scratch) {
  mdp.feasible_actions(pre, scratch);
  if (scratch.empty()) throw NoFeasibleAction("no feasible action in the current state");
  const bool myopic = policy.discount == 0.0 || policy.weights.theta.isZero(0.0);
  Decision best;
  PostState post;
  for (const Action& a : scratch) {
    const double c = mdp.evaluate_action(pre, a, post);
    const double score = myopic ? c : c + policy.discount * basis_value(policy.basis, policy.weights.theta, post);
    if (score > best.score) {
      best.score = score;
      best.action = a;
      best.post = post;
      best.contribution = c;
    }
  }
  if (!(best.score > -std::numeric_limits<double>::infinity())) {
    throw NoFeasibleAction("every action scored as non-finite");
  }
  return best;
}

Action greedy_action(const GreedyPolicy& policy, const MdpInterface& mdp, const PreState& pre) {
  std::vector<Action> scratch;
  return greedy_decision(policy, mdp, pre, scratch).action;
}

est::EstimatorInputs collect_samples(const GreedyPolicy& policy, const MdpInterface& mdp, int n_samples,
                                     std::uint64_t seed, int iteration) {
  if (n_samples < 1) throw ValidationError("need at least one sample");
  policy.validate();
  const int k = policy.basis.feature_count();
  est::EstimatorInputs in;
  in.phi_prev.resize(n_samples, k);
  in.phi_next.resize(n_samples, k);
  in.contributions.resize(n_samples);
  in.discount = policy.discount;
  std::vector<Action> scratch;
  for (int i = 0; i < n_samples; ++i) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(Stream::Sampling), static_cast<std::uint64_t>(iteration),
                                 static_cast<std::uint64_t>(i)});
    const PostState start = mdp.sample_initial_post_state(rng);
    evaluate_basis_into(policy.basis, start, in.phi_prev.row(i));
    const PreState pre = mdp.exogenous_step(start, rng);
    const Decision d = greedy_decision(policy, mdp, pre, scratch);
    in.contributions(i) = d.contribution;
    evaluate_basis_into(policy.basis, d.post, in.phi_next.row(i));
  }
  return in;
}

void ApiConfig::validate(int features) const {
  if (iterations < 1) throw ValidationError("policy improvement loop count must be at least 1");
  if (samples < features) throw ValidationError("need at least as many samples per loop as basis functions");
}

ApiResult api_loop(const ApiConfig& config, const MdpInterface& mdp, const BasisSpec& basis, double discount) {
  basis.validate();
  config.validate(basis.feature_count());
  ApiResult result{myopic_policy(basis, discount), {}};
  result.trajectory.reserve(static_cast<std::size_t>(config.iterations));
  for (int j = 0; j < config.iterations; ++j) {
    est::EstimatorInputs in = collect_samples(result.policy, mdp, config.samples, config.seed, j);
    try {
      result.policy.weights = est::solve_bellman(config.estimator, in, config.solver);
    } catch (const NumericalError& e) {
      throw EstimatorFailed(j, e.what(), result.policy.weights.theta);
    }
    result.trajectory.push_back(result.policy.weights);
  }
  return result;
}

double SimulationResult::mean() const {
  if (returns.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
}

SimulationResult simulate_policy_value(const GreedyPolicy& policy, const MdpInterface& mdp,
                                       std::span<const PreState> start_states, const SimulationOptions& options) {
  policy.validate();
  if (options.horizon < 1) throw ValidationError("horizon must be at least one step");
  if (start_states.empty()) throw ValidationError("need at least one start state");
  const double gamma = policy.discount;
  SimulationResult result;
  result.returns.resize(start_states.size());
  Fingerprint all_paths;
  std::vector<Action> scratch;
  for (std::size_t i = 0; i < start_states.size(); ++i) {
    Rng rng = make_stream(options.seed, Stream::EvaluationPath, i);
    PreState s = start_states[i];
    double total = 0.0;
    double weight = 1.0;
    for (int t = 0; t < options.horizon; ++t) {
      all_paths.add(mdp.exogenous_fingerprint(s));
      const Decision d = greedy_decision(policy, mdp, s, scratch);
      total += weight * d.contribution;
      weight *= gamma;
      if (t + 1 < options.horizon) s = mdp.exogenous_step(d.post, rng);
    }
    result.returns[i] = total;
  }
  result.path_hash = all_paths.value();
  if (std::isfinite(options.contribution_bound)) {
    result.truncation_bound = std::pow(gamma, options.horizon) * options.contribution_bound / (1.0 - gamma);
    result.truncation_warning = result.truncation_bound > options.truncation_tolerance;
  }
  return result;
}

}  // namespace adp::mdp
