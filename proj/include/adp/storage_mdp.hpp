#pragma once

#include <cstdint>

#include "adp/mdp.hpp"
#include "adp/stochastic_models.hpp"
#include "adp/storage.hpp"

namespace adp::storage {

// Coordinate layout shared by every storage-problem state. The first five are observable;
// the rest are latent drivers of the exogenous processes (continuous problems only).
enum Coord : int {
  kTime = 0,
  kResource = 1,
  kWind = 2,
  kDemand = 3,
  kPrice = 4,
  kWindDeviation = 5,
  kPriceDeviation = 6,
  kDemandDeviation = 7,
};
inline constexpr int kObservableCoords = 5;
inline constexpr int kContinuousCoords = 8;

enum class ProblemKind {
  Full,              // wind, demand, storage and grid
  BatteryArbitrage,  // storage trading against the grid only
};

// A storage device wired to the wind, price and load models, scaled to one problem.
struct StorageEnvironment {
  ProblemKind kind = ProblemKind::Full;
  StorageSpec storage;
  StochasticModels models;
  double mean_demand = 0.25;  // MWh per step
  double wind_ratio = 0.1;    // mean wind energy over mean demand
  bool time_dependent = false;

  void validate() const;
  bool has_wind() const { return kind == ProblemKind::Full && wind_ratio > 0.0; }
  bool has_demand() const { return kind == ProblemKind::Full; }

  // Farm output for a wind deviation; the farm is sized so that its stationary mean is
  // wind_ratio * mean_demand.
  double wind_energy(double deviation) const;
  double demand(double deseasonalized, int time_of_day) const;
  double price(double deseasonalized, int time_of_day) const;
  // Average over the week of the hour-of-week tables, for the hour containing time_of_day.
  double daily_price_profile(int time_of_day) const;
  double daily_demand_profile(int time_of_day) const;
};

// Storage problem simulated in continuous state, with a regular lattice of decisions.
class ContinuousStorageMdp : public mdp::MdpInterface {
 public:
  explicit ContinuousStorageMdp(StorageEnvironment env, int grid_levels = 21, int discharge_levels = 21);

  mdp::PostState sample_initial_post_state(Rng& rng) const override;
  mdp::PreState exogenous_step(const mdp::PostState& post, Rng& rng) const override;
  void feasible_actions(const mdp::PreState& pre, std::vector<mdp::Action>& out) const override;
  mdp::PostState apply_action(const mdp::PreState& pre, const mdp::Action& action) const override;
  double contribution(const mdp::PreState& pre, const mdp::Action& action) const override;
  double evaluate_action(const mdp::PreState& pre, const mdp::Action& action, mdp::PostState& post) const override;
  std::uint64_t exogenous_fingerprint(const mdp::PreState& pre) const override;

  // Uniform over the exploration box, used for evaluation start states.
  mdp::PreState sample_start_state(Rng& rng) const;
  const StorageEnvironment& environment() const { return env_; }
  StorageState storage_state(const mdp::State& s) const;
  // Exploration box per coordinate (lower, upper).
  std::pair<double, double> coordinate_range(int coord) const;

 private:
  mdp::State observe(int time, double resource, double wind_dev, double price_dev, double demand_dev) const;

  StorageEnvironment env_;
  int grid_levels_;
  int discharge_levels_;
  double wind_sd_;
  double price_sd_;
  double demand_sd_;
};

}  // namespace adp::storage
