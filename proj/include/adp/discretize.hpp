#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adp/exact.hpp"
#include "adp/mdp.hpp"
#include "adp/storage_mdp.hpp"

namespace adp::exact {

// Midpoints of `count` equal bins over [lower, upper]. Values outside the range bin to the
// nearest end level.
struct LevelGrid {
  double lower = 0.0;
  double upper = 0.0;
  int count = 1;

  double level(int i) const;
  int nearest(double x) const;
};

struct ChainEstimate {
  std::vector<std::vector<TransitionEntry>> rows;
  std::vector<int> empty_rows;  // rows that received no finite sample; set to a self-loop
};

// One row per grid level: simulate `step` from the level midpoint `samples` times, bin each
// outcome to its nearest level and normalize. Row i draws from (seed, Discretization, component, i).
ChainEstimate estimate_level_transitions(const LevelGrid& grid, const std::function<double(double, Rng&)>& step,
                                         int samples, std::uint64_t seed, std::uint64_t component);

struct DiscretizationLevels {
  int time = 1;
  int resource = 33;
  int price = 20;
  int demand = 1;
  int wind = 10;

  void validate() const;
};

struct ActionLatticeSize {
  int grid = 11;
  int discharge = 11;
};

inline constexpr int kMinTransitionSamples = 10000;

// A storage environment reduced to a finite MDP. Endogenous index = resource level;
// exogenous index = ((time * price + price_level) * demand + demand_level) * wind + wind_level.
struct DiscreteStorageModel {
  storage::StorageEnvironment environment;
  DiscretizationLevels levels;
  std::vector<double> resource_levels;
  LevelGrid price_grid;   // deseasonalized log price
  LevelGrid demand_grid;  // deseasonalized load
  LevelGrid wind_grid;    // wind deviation
  std::vector<int> exo_time;
  std::vector<double> exo_wind;
  std::vector<double> exo_demand;
  std::vector<double> exo_price;
  // Per global action id.
  std::vector<double> action_grid_flow;
  std::vector<double> action_discharge_flow;
  std::vector<double> action_post_resource;
  std::vector<std::string> empty_rows;  // exogenous component rows that fell back to a self-loop
  DiscreteMdp mdp;

  // Pre-decision state with coordinates [time, resource, wind, demand, price].
  mdp::PreState state(int s) const;
  std::vector<std::string> coordinate_names() const;
  Eigen::MatrixXd coordinates() const;
  // Resource levels bracketing r with weights (probability of the lower, upper level).
  std::vector<TransitionEntry> resource_rounding(double r) const;
};

DiscreteStorageModel discretize_environment(const storage::StorageEnvironment& environment,
                                            const DiscretizationLevels& levels, const ActionLatticeSize& lattice,
                                            double discount, int mc_samples, std::uint64_t seed);

// Simulator view of a discretized model; sampling follows its transition rows exactly.
class DiscreteStorageMdp : public mdp::MdpInterface {
 public:
  explicit DiscreteStorageMdp(std::shared_ptr<const DiscreteStorageModel> model);

  mdp::PostState sample_initial_post_state(Rng& rng) const override;
  mdp::PreState exogenous_step(const mdp::PostState& post, Rng& rng) const override;
  void feasible_actions(const mdp::PreState& pre, std::vector<mdp::Action>& out) const override;
  mdp::PostState apply_action(const mdp::PreState& pre, const mdp::Action& action) const override;
  double contribution(const mdp::PreState& pre, const mdp::Action& action) const override;
  double evaluate_action(const mdp::PreState& pre, const mdp::Action& action, mdp::PostState& post) const override;
  std::uint64_t exogenous_fingerprint(const mdp::PreState& pre) const override;

  // Uniform over the state grid.
  mdp::PreState sample_start_state(Rng& rng) const;
  const DiscreteStorageModel& model() const { return *model_; }

 private:
  int state_index(const mdp::PreState& pre) const;

  std::shared_ptr<const DiscreteStorageModel> model_;
};

}  // namespace adp::exact
