#include "adp/storage_mdp.hpp"

#include <algorithm>
#include <cmath>

#include "adp/errors.hpp"

namespace adp::storage {

namespace {

constexpr double kExplorationWidth = 3.0;  // stationary standard deviations

int hour_of(int time_of_day) { return (time_of_day % kStepsPerDay) / 4; }

template <std::size_t N>
double average(const std::array<double, N>& a) {
  double s = 0.0;
  for (double x : a) s += x;
  return s / static_cast<double>(N);
}

}  // namespace

void StorageEnvironment::validate() const {
  storage.validate();
  models.validate();
  if (!(mean_demand > 0.0)) throw ValidationError("mean demand must be positive");
  if (!(wind_ratio >= 0.0)) throw ValidationError("wind ratio must be non-negative");
}

double StorageEnvironment::wind_energy(double deviation) const {
  if (!has_wind()) return 0.0;
  const double root = models.wind.mean_sqrt_speed + deviation;
  const double cube = std::pow(root * root, 3);
  return wind_ratio * mean_demand * cube / models.wind.mean_cubed_speed();
}

double StorageEnvironment::daily_demand_profile(int time_of_day) const {
  const int h = hour_of(time_of_day);
  double s = 0.0;
  for (int d = 0; d < 7; ++d) s += models.demand.hour_of_week[static_cast<std::size_t>(d * 24 + h)];
  return s / 7.0 + average(models.demand.month_of_year);
}

double StorageEnvironment::daily_price_profile(int time_of_day) const {
  const int h = hour_of(time_of_day);
  double s = 0.0;
  for (int d = 0; d < 7; ++d) s += models.price.hour_of_week[static_cast<std::size_t>(d * 24 + h)];
  return s / 7.0 + average(models.price.month_of_year);
}

double StorageEnvironment::demand(double deseasonalized, int time_of_day) const {
  if (!has_demand()) return 0.0;
  const double mean = models.demand.mean_level();
  const double level = time_dependent ? daily_demand_profile(time_of_day) : mean;
  return mean_demand * std::max(0.0, level + deseasonalized) / mean;
}

double StorageEnvironment::price(double deseasonalized, int time_of_day) const {
  const double seasonal = time_dependent ? daily_price_profile(time_of_day) : 0.0;
  return std::exp(deseasonalized + seasonal) - models.price.shift;
}

ContinuousStorageMdp::ContinuousStorageMdp(StorageEnvironment env, int grid_levels, int discharge_levels)
    : env_(std::move(env)), grid_levels_(grid_levels), discharge_levels_(discharge_levels) {
  env_.validate();
  if (grid_levels_ < 1 || discharge_levels_ < 1) throw ValidationError("action lattice needs at least one level");
  wind_sd_ = env_.models.wind.stationary_sd();
  price_sd_ = env_.models.price.stationary_sd(kStepYears);
  demand_sd_ = env_.models.demand.stationary_sd();
}

std::pair<double, double> ContinuousStorageMdp::coordinate_range(int coord) const {
  const auto& m = env_.models;
  switch (coord) {
    case kTime:
      return {0.0, env_.time_dependent ? kStepsPerDay - 1.0 : 0.0};
    case kResource:
      return {env_.storage.resource_floor, 1.0};
    case kWindDeviation:
      return {-kExplorationWidth * wind_sd_, kExplorationWidth * wind_sd_};
    case kPriceDeviation:
      return {m.price.long_run_level - kExplorationWidth * price_sd_,
              m.price.long_run_level + kExplorationWidth * price_sd_};
    case kDemandDeviation:
      return {-kExplorationWidth * demand_sd_, kExplorationWidth * demand_sd_};
    case kWind:
      return {env_.wind_energy(-kExplorationWidth * wind_sd_), env_.wind_energy(kExplorationWidth * wind_sd_)};
    case kDemand:
      return {env_.demand(-kExplorationWidth * demand_sd_, 0), env_.demand(kExplorationWidth * demand_sd_, 0)};
    case kPrice: {
      const auto p = coordinate_range(kPriceDeviation);
      return {env_.price(p.first, 0), env_.price(p.second, 0)};
    }
    default:
      throw ValidationError("unknown storage coordinate");
  }
}

mdp::State ContinuousStorageMdp::observe(int time, double resource, double wind_dev, double price_dev,
                                         double demand_dev) const {
  mdp::State s;
  s.coords.resize(kContinuousCoords);
  s.coords[kTime] = time;
  s.coords[kResource] = resource;
  s.coords[kWind] = env_.wind_energy(wind_dev);
  s.coords[kDemand] = env_.demand(demand_dev, time);
  s.coords[kPrice] = env_.price(price_dev, time);
  s.coords[kWindDeviation] = wind_dev;
  s.coords[kPriceDeviation] = price_dev;
  s.coords[kDemandDeviation] = demand_dev;
  return s;
}

StorageState ContinuousStorageMdp::storage_state(const mdp::State& s) const {
  if (s.coords.size() != kContinuousCoords) throw DimensionMismatch("storage state has the wrong length");
  StorageState out;
  out.resource = s.coords[kResource];
  out.wind_energy = s.coords[kWind];
  out.demand = s.coords[kDemand];
  out.price = s.coords[kPrice];
  out.time_of_day = static_cast<int>(s.coords[kTime]);
  return out;
}

mdp::PreState ContinuousStorageMdp::sample_start_state(Rng& rng) const {
  // Fixed number of draws per state keeps paired streams aligned across problem variants.
  const double u_time = uniform01(rng);
  const double u_resource = uniform01(rng);
  const double u_wind = uniform01(rng);
  const double u_price = uniform01(rng);
  const double u_demand = uniform01(rng);
  auto lerp = [&](int coord, double u) {
    const auto [lo, hi] = coordinate_range(coord);
    return lo + u * (hi - lo);
  };
  const int time = env_.time_dependent ? std::min(kStepsPerDay - 1, static_cast<int>(u_time * kStepsPerDay)) : 0;
  return observe(time, lerp(kResource, u_resource), env_.has_wind() ? lerp(kWindDeviation, u_wind) : 0.0,
                 lerp(kPriceDeviation, u_price), env_.has_demand() ? lerp(kDemandDeviation, u_demand) : 0.0);
}

mdp::PostState ContinuousStorageMdp::sample_initial_post_state(Rng& rng) const { return sample_start_state(rng); }

mdp::PreState ContinuousStorageMdp::exogenous_step(const mdp::PostState& post, Rng& rng) const {
  if (post.coords.size() != kContinuousCoords) throw DimensionMismatch("storage state has the wrong length");
  const int time = env_.time_dependent ? (static_cast<int>(post.coords[kTime]) + 1) % kStepsPerDay : 0;
  const CalendarPosition calendar{};  // seasonal terms are applied by the environment
  const WindStep w = wind_step(env_.models.wind, post.coords[kWindDeviation], env_.storage.step_seconds, rng);
  const PriceStep p = price_step(env_.models.price, post.coords[kPriceDeviation], calendar, kStepYears, rng);
  const DemandStep d = demand_step(env_.models.demand, post.coords[kDemandDeviation], calendar, rng);
  return observe(time, post.coords[kResource], env_.has_wind() ? w.deviation : 0.0, p.deseasonalized,
                 env_.has_demand() ? d.deseasonalized : 0.0);
}

void ContinuousStorageMdp::feasible_actions(const mdp::PreState& pre, std::vector<mdp::Action>& out) const {
  const ActionBox box = feasible_action_box(storage_state(pre), env_.storage);
  const auto lattice = action_lattice(box, grid_levels_, discharge_levels_);
  out.resize(lattice.size());
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    out[i].index = static_cast<std::int32_t>(i);
    out[i].value = {lattice[i].first, lattice[i].second};
  }
}

double ContinuousStorageMdp::evaluate_action(const mdp::PreState& pre, const mdp::Action& action,
                                             mdp::PostState& post) const {
  const StorageState s = storage_state(pre);
  const FlowDecision f = derive_flows(s, action.value[0], action.value[1], env_.storage);
  post = pre;
  post.coords[kResource] = storage_transition(s, f, env_.storage);
  return storage::contribution(s, f);
}

mdp::PostState ContinuousStorageMdp::apply_action(const mdp::PreState& pre, const mdp::Action& action) const {
  mdp::PostState post;
  evaluate_action(pre, action, post);
  return post;
}

double ContinuousStorageMdp::contribution(const mdp::PreState& pre, const mdp::Action& action) const {
  mdp::PostState post;
  return evaluate_action(pre, action, post);
}

std::uint64_t ContinuousStorageMdp::exogenous_fingerprint(const mdp::PreState& pre) const {
  Fingerprint h;
  for (int c : {kTime, kWindDeviation, kPriceDeviation, kDemandDeviation}) h.add(pre.coords[c]);
  return h.value();
}

}  // namespace adp::storage
