#pragma once

#include <optional>
#include <utility>
#include <vector>

namespace adp::storage {

// Physical parameters of one storage device attached to a wind farm, a load and the grid.
// Energies are MWh per step; the resource level is a fraction of capacity.
struct StorageSpec {
  double capacity = 1.0;                 // MWh
  double max_discharge_fraction = -0.1;  // lower rate limit per step, as a fraction of capacity (<= 0)
  double max_charge_fraction = 0.1;      // upper rate limit per step (> 0)
  double eta_charge = 0.9;
  double eta_discharge = 0.9;
  double resource_floor = 0.2;           // lowest allowed fraction of capacity
  bool allow_sell_to_grid = true;
  double step_seconds = 900.0;

  void validate() const;
  double round_trip_efficiency() const { return eta_charge * eta_discharge; }
};

struct StorageState {
  double resource = 0.5;     // fraction of capacity
  double wind_energy = 0.0;  // MWh available this step
  double demand = 0.0;       // MWh requested this step
  double price = 0.0;        // $/MWh
  std::optional<int> time_of_day;

  void validate(const StorageSpec& spec) const;
};

// All five flows of one step. Positive grid_to_storage buys, negative sells.
struct FlowDecision {
  double grid_to_storage = 0.0;
  double storage_to_demand = 0.0;
  double wind_to_demand = 0.0;
  double wind_to_storage = 0.0;
  double grid_to_demand = 0.0;
};

// Rectangle of (grid_to_storage, storage_to_demand) decisions. Every point inside is
// feasible; it is the per-flow limits tightened so that the resource stays in range.
struct ActionBox {
  double grid_min = 0.0;
  double grid_max = 0.0;
  double discharge_min = 0.0;
  double discharge_max = 0.0;
};

// Throws InfeasibleFlow naming the first violated constraint.
FlowDecision derive_flows(const StorageState& state, double grid_to_storage, double storage_to_demand,
                          const StorageSpec& spec);

ActionBox feasible_action_box(const StorageState& state, const StorageSpec& spec);

// Next resource fraction, clipped at full. Selling drains energy/eta_discharge from the
// device so that buy-then-sell and charge-then-serve have the same round-trip loss.
double storage_transition(const StorageState& state, const FlowDecision& flows, const StorageSpec& spec);

// Revenue from serving demand minus what the grid is paid (or plus what it pays us).
double contribution(const StorageState& state, const FlowDecision& flows);

// Regular lattice over the box, grid flow major. Degenerate sides collapse to one value and
// the idle grid flow (zero) is always included when the box straddles it.
std::vector<std::pair<double, double>> action_lattice(const ActionBox& box, int grid_levels, int discharge_levels);

}  // namespace adp::storage
