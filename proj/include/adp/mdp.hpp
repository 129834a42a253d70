#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "adp/estimators.hpp"
#include "adp/random.hpp"

namespace adp::mdp {

inline constexpr int kMaxStateDims = 10;
using StateVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxStateDims, 1>;

// Pre- and post-decision states share one representation: coordinates, plus an index when
// the model enumerates its states.
struct State {
  StateVector coords;
  std::int64_t index = -1;
};
using PreState = State;
using PostState = State;

struct Action {
  std::int32_t index = -1;         // position in the feasible list
  std::array<double, 2> value{};   // model payload, e.g. grid and storage flows
};

class MdpInterface {
 public:
  virtual ~MdpInterface() = default;

  // Exploration distribution over post-decision states.
  virtual PostState sample_initial_post_state(Rng& rng) const = 0;
  virtual PreState exogenous_step(const PostState& post, Rng& rng) const = 0;
  virtual void feasible_actions(const PreState& pre, std::vector<Action>& out) const = 0;
  virtual PostState apply_action(const PreState& pre, const Action& action) const = 0;
  virtual double contribution(const PreState& pre, const Action& action) const = 0;

  // Contribution and post-decision state together; models override this when both come
  // from the same computation.
  virtual double evaluate_action(const PreState& pre, const Action& action, PostState& post) const {
    post = apply_action(pre, action);
    return contribution(pre, action);
  }

  // Hash of the action-independent part of a state. Paths that share random numbers share
  // fingerprints, which lets evaluations confirm they were paired.
  virtual std::uint64_t exogenous_fingerprint(const PreState&) const { return 0; }
};

std::vector<Action> feasible_actions(const MdpInterface& mdp, const PreState& pre);

struct DimensionScaling {
  double lower = 0.0;
  double upper = 1.0;
};

// Polynomial features of selected post-state coordinates, each mapped affinely so that
// [lower, upper] becomes [0, 1]. Degree 2 features: 1, s_i, then s_i s_j for i <= j.
struct BasisSpec {
  std::vector<int> dimensions;
  int degree = 2;
  std::vector<DimensionScaling> scaling;

  int feature_count() const;
  void validate() const;
};

// A row of a column-major design matrix, or any strided row buffer.
using FeatureRow = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

Eigen::VectorXd evaluate_basis(const BasisSpec& basis, const State& post);
void evaluate_basis_into(const BasisSpec& basis, const State& post, FeatureRow out);
double basis_value(const BasisSpec& basis, const Eigen::VectorXd& theta, const State& post);

struct GreedyPolicy {
  est::WeightVector weights;
  BasisSpec basis;
  double discount = 0.0;

  void validate() const;
};

GreedyPolicy myopic_policy(const BasisSpec& basis, double discount);

struct Decision {
  Action action;
  PostState post;
  double contribution = 0.0;
  double score = -std::numeric_limits<double>::infinity();
};

// argmax over feasible actions of contribution + discount * theta . phi(post); ties go to
// the lowest action index. Throws NoFeasibleAction.
Decision greedy_decision(const GreedyPolicy& policy, const MdpInterface& mdp, const PreState& pre,
                         std::vector<Action>& scratch);
Action greedy_action(const GreedyPolicy& policy, const MdpInterface& mdp, const PreState& pre);

// Sample i uses the stream (seed, Sampling, iteration, i), so batches are reproducible and
// can be generated in any order.
est::EstimatorInputs collect_samples(const GreedyPolicy& policy, const MdpInterface& mdp, int n_samples,
                                     std::uint64_t seed, int iteration = 0);

struct ApiConfig {
  int iterations = 10;   // policy improvement loops
  int samples = 2000;    // Bellman samples per loop
  est::EstimatorKind estimator = est::EstimatorKind::InstrumentalVariables;
  std::uint64_t seed = 0;
  est::SolverOptions solver;

  void validate(int features) const;
};

struct ApiResult {
  GreedyPolicy policy;
  std::vector<est::WeightVector> trajectory;  // weights after each loop
};

// Approximate policy iteration from zero weights. Throws EstimatorFailed.
ApiResult api_loop(const ApiConfig& config, const MdpInterface& mdp, const BasisSpec& basis, double discount);

struct SimulationOptions {
  int horizon = 9600;
  std::uint64_t seed = 0;
  // Upper bound on |contribution|; enables the truncation check when finite.
  double contribution_bound = std::numeric_limits<double>::quiet_NaN();
  double truncation_tolerance = 1e-6;
};

struct SimulationResult {
  std::vector<double> returns;  // discounted return per path
  double truncation_bound = std::numeric_limits<double>::quiet_NaN();
  bool truncation_warning = false;
  std::uint64_t path_hash = 0;

  double mean() const;
};

// Path i starts at start_states[i] and draws from the stream (seed, EvaluationPath, i).
SimulationResult simulate_policy_value(const GreedyPolicy& policy, const MdpInterface& mdp,
                                       std::span<const PreState> start_states, const SimulationOptions& options);

}  // namespace adp::mdp
