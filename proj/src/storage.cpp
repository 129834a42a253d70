#include "adp/storage.hpp"

#include <algorithm>
#include <cmath>

#include "adp/errors.hpp"

namespace adp::storage {

namespace {

double slack(const StorageSpec& spec, const StorageState& s) {
  return 1e-9 * std::max({1.0, spec.capacity, s.demand, s.wind_energy});
}

}  // namespace

void StorageSpec::validate() const {
  if (!(capacity > 0.0)) throw ValidationError("storage capacity must be positive");
  if (!(max_charge_fraction > 0.0)) throw ValidationError("charge rate limit must be positive");
  if (!(max_discharge_fraction <= 0.0)) throw ValidationError("discharge rate limit must be non-positive");
  if (!(eta_charge > 0.0 && eta_charge <= 1.0) || !(eta_discharge > 0.0 && eta_discharge <= 1.0)) {
    throw ValidationError("efficiencies must lie in (0, 1]");
  }
  if (!(resource_floor >= 0.0 && resource_floor < 1.0)) throw ValidationError("resource floor must lie in [0, 1)");
  if (!(step_seconds > 0.0)) throw ValidationError("step length must be positive");
}

void StorageState::validate(const StorageSpec& spec) const {
  const double tol = 1e-9;
  if (!(resource >= spec.resource_floor - tol && resource <= 1.0 + tol)) {
    throw ValidationError("resource level outside [floor, 1]");
  }
  if (!(wind_energy >= 0.0) || !(demand >= 0.0)) throw ValidationError("wind and demand must be non-negative");
  if (!std::isfinite(price)) throw ValidationError("price must be finite");
}

FlowDecision derive_flows(const StorageState& state, double grid_to_storage, double storage_to_demand,
                          const StorageSpec& spec) {
  const double tol = slack(spec, state);
  FlowDecision f;
  f.grid_to_storage = grid_to_storage;
  f.storage_to_demand = storage_to_demand;
  f.wind_to_demand = std::min(state.wind_energy, state.demand);
  f.wind_to_storage = state.wind_energy - f.wind_to_demand;

  const double charge_cap = spec.max_charge_fraction * spec.capacity;
  if (!std::isfinite(grid_to_storage) || !std::isfinite(storage_to_demand)) {
    throw InfeasibleFlow("non-finite decision");
  }
  if (storage_to_demand < -tol) throw InfeasibleFlow("storage_to_demand >= 0");
  if (storage_to_demand > charge_cap + tol) throw InfeasibleFlow("storage_to_demand within discharge rate");
  if (grid_to_storage > charge_cap / spec.eta_charge + tol) throw InfeasibleFlow("grid_to_storage within charge rate");
  if (!spec.allow_sell_to_grid && grid_to_storage < -tol) throw InfeasibleFlow("selling to the grid is disabled");
  if (grid_to_storage < spec.max_discharge_fraction * spec.capacity / spec.eta_discharge - tol) {
    throw InfeasibleFlow("grid_to_storage within discharge rate");
  }
  f.storage_to_demand = std::max(0.0, storage_to_demand);

  f.grid_to_demand = state.demand - spec.eta_discharge * f.storage_to_demand - f.wind_to_demand;
  if (f.grid_to_demand < -tol) throw InfeasibleFlow("demand must not be over-served (grid_to_demand >= 0)");
  f.grid_to_demand = std::max(0.0, f.grid_to_demand);

  const double bought = std::max(0.0, f.grid_to_storage);
  const double sold = std::max(0.0, -f.grid_to_storage);
  const double drained = f.storage_to_demand + sold / spec.eta_discharge;
  const double gained = spec.eta_charge * (bought + f.wind_to_storage);
  if (state.resource + (gained - drained) / spec.capacity < spec.resource_floor - tol / spec.capacity) {
    throw InfeasibleFlow("resource must stay above its floor");
  }
  return f;
}

ActionBox feasible_action_box(const StorageState& state, const StorageSpec& spec) {
  const double wind_to_demand = std::min(state.wind_energy, state.demand);
  const double wind_to_storage = state.wind_energy - wind_to_demand;
  const double rate = spec.max_charge_fraction * spec.capacity;

  // Energy the device may give up this step, and room left for grid charging.
  const double headroom_down =
      std::max(0.0, (state.resource - spec.resource_floor) * spec.capacity + spec.eta_charge * wind_to_storage);
  const double headroom_up = (1.0 - state.resource) * spec.capacity - spec.eta_charge * wind_to_storage;

  ActionBox box;
  box.discharge_min = 0.0;
  box.discharge_max =
      std::max(0.0, std::min({rate, (state.demand - wind_to_demand) / spec.eta_discharge, headroom_down}));
  box.grid_max = std::min(rate / spec.eta_charge, std::max(0.0, headroom_up) / spec.eta_charge);
  if (spec.allow_sell_to_grid) {
    const double sell_limit = spec.max_discharge_fraction * spec.capacity / spec.eta_discharge;
    box.grid_min = std::min(0.0, std::max(sell_limit, -(headroom_down - box.discharge_max) * spec.eta_discharge));
  } else {
    box.grid_min = 0.0;
  }
  return box;
}

double storage_transition(const StorageState& state, const FlowDecision& flows, const StorageSpec& spec) {
  const double bought = std::max(0.0, flows.grid_to_storage);
  const double sold = std::max(0.0, -flows.grid_to_storage);
  const double net = spec.eta_charge * (bought + flows.wind_to_storage) - sold / spec.eta_discharge -
                     flows.storage_to_demand;
  return std::min(state.resource + net / spec.capacity, 1.0);
}

double contribution(const StorageState& state, const FlowDecision& flows) {
  return state.price * state.demand - state.price * (flows.grid_to_storage + flows.grid_to_demand);
}

namespace {

std::vector<double> lattice_axis(double lo, double hi, int levels, bool include_zero) {
  std::vector<double> axis;
  const double span = hi - lo;
  if (levels <= 1 || span <= 1e-12 * std::max(1.0, std::abs(hi))) {
    axis.push_back(levels <= 1 && include_zero && lo < 0.0 && hi > 0.0 ? 0.0 : lo);
    return axis;
  }
  axis.reserve(static_cast<std::size_t>(levels) + 1);
  for (int i = 0; i < levels; ++i) {
    axis.push_back(i == levels - 1 ? hi : lo + span * static_cast<double>(i) / (levels - 1));
  }
  if (include_zero && lo < 0.0 && hi > 0.0) {
    const double tol = 1e-12 * span;
    auto it = std::lower_bound(axis.begin(), axis.end(), -tol);
    if (it == axis.end() || std::abs(*it) > tol) {
      axis.insert(it, 0.0);
    } else {
      *it = 0.0;
    }
  }
  return axis;
}

}  // namespace

std::vector<std::pair<double, double>> action_lattice(const ActionBox& box, int grid_levels, int discharge_levels) {
  if (grid_levels < 1 || discharge_levels < 1) throw ValidationError("lattice needs at least one level per side");
  const auto grid = lattice_axis(box.grid_min, box.grid_max, grid_levels, true);
  const auto discharge = lattice_axis(box.discharge_min, box.discharge_max, discharge_levels, false);
  std::vector<std::pair<double, double>> out;
  out.reserve(grid.size() * discharge.size());
  for (double g : grid) {
    for (double d : discharge) out.emplace_back(g, d);
  }
  return out;
}

}  // namespace adp::storage
