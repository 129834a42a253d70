#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace adp::exact {

struct TransitionEntry {
  std::int32_t target = 0;
  double probability = 0.0;
};

// Finite MDP whose state factors into an endogenous part (moved by the action) and an
// exogenous part (a Markov chain the action cannot influence):
//   P(s' | s, a) = P_endo(r' | s, a) * P_exo(e' | e),  s = r * exogenous_count + e.
// A plain MDP is the special case of a single exogenous state.
class DiscreteMdp {
 public:
  class Builder;

  int endogenous_count() const { return endo_; }
  int exogenous_count() const { return exo_; }
  int state_count() const { return endo_ * exo_; }
  double discount() const { return discount_; }
  int endogenous_of(int s) const { return s / exo_; }
  int exogenous_of(int s) const { return s % exo_; }
  int state_of(int endogenous, int exogenous) const { return endogenous * exo_ + exogenous; }

  int action_count(int s) const {
    return static_cast<int>(state_action_offset_[static_cast<std::size_t>(s) + 1] -
                            state_action_offset_[static_cast<std::size_t>(s)]);
  }
  std::int64_t action_id(int s, int a) const { return state_action_offset_[static_cast<std::size_t>(s)] + a; }
  std::int64_t total_actions() const { return static_cast<std::int64_t>(contributions_.size()); }
  double contribution(int s, int a) const { return contributions_[static_cast<std::size_t>(action_id(s, a))]; }
  std::span<const TransitionEntry> endogenous_row(int s, int a) const;
  std::span<const TransitionEntry> exogenous_row(int e) const;
  // Full transition row over all states (product of the two factors).
  std::vector<TransitionEntry> transition_row(int s, int a) const;

  // Row sums within tol, non-negative probabilities, at least one action per state.
  void validate(double tol = 1e-9) const;

 private:
  int endo_ = 0;
  int exo_ = 0;
  double discount_ = 0.0;
  std::vector<std::int64_t> state_action_offset_;
  std::vector<double> contributions_;
  std::vector<std::int64_t> endo_row_offset_;
  std::vector<TransitionEntry> endo_entries_;
  std::vector<std::int64_t> exo_row_offset_;
  std::vector<TransitionEntry> exo_entries_;
};

class DiscreteMdp::Builder {
 public:
  Builder(int endogenous_count, int exogenous_count, double discount);
  // Single exogenous state; endogenous rows are the whole transition.
  static Builder flat(int state_count, double discount);

  void set_exogenous_row(int e, std::span<const TransitionEntry> row);
  // Actions must arrive in non-decreasing state order. Returns the action's index within its state.
  int add_action(int state, double contribution, std::span<const TransitionEntry> endogenous_row);
  DiscreteMdp build();

 private:
  DiscreteMdp mdp_;
  std::vector<std::vector<TransitionEntry>> exo_rows_;
  int current_state_ = 0;
  std::vector<int> actions_per_state_;
};

struct ValueIterationOptions {
  double epsilon = 1e-6;
  int max_iterations = 1000000;
  std::optional<Eigen::VectorXd> initial;
};

struct ValueFunction {
  Eigen::VectorXd values;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> residual_history;
};

using PolicyTable = std::vector<int>;

// Jacobi sweeps until the sup-norm change drops below epsilon (1 - discount) / (2 discount),
// which leaves the greedy policy epsilon-optimal. Throws NotConverged.
ValueFunction value_iteration(const DiscreteMdp& mdp, const ValueIterationOptions& opts = {});

// Ties go to the lowest action index.
PolicyTable extract_greedy_policy(const DiscreteMdp& mdp, const Eigen::VectorXd& values);

// Solves (I - discount P_pi) V = C_pi with a sparse LU factorization. Throws SolveFailed.
Eigen::VectorXd exact_policy_value(const DiscreteMdp& mdp, const PolicyTable& policy);

// Versioned on-disk form of a solved problem.
inline constexpr std::uint32_t kSolutionFormatVersion = 1;

struct ExactSolution {
  std::string problem_key;
  double discount = 0.0;
  ValueFunction value;
  PolicyTable policy;
  std::vector<std::string> coordinate_names;
  Eigen::MatrixXd coordinates;  // one row per state
};

void write_solution_binary(const std::filesystem::path& path, const ExactSolution& solution);
ExactSolution read_solution_binary(const std::filesystem::path& path);
void write_solution_csv(const std::filesystem::path& path, const ExactSolution& solution);

}  // namespace adp::exact
