#include "adp/discretize.hpp"

#include <algorithm>
#include <cmath>

#include "adp/errors.hpp"

namespace adp::exact {

namespace {

constexpr double kGridWidth = 3.0;  // stationary standard deviations either side
constexpr double kRoundingSnap = 1e-12;

enum Component : std::uint64_t { kPriceChain = 1, kWindChain = 2, kDemandChain = 3 };

std::vector<std::vector<TransitionEntry>> identity_chain(int count) {
  std::vector<std::vector<TransitionEntry>> rows(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) rows[static_cast<std::size_t>(i)] = {{i, 1.0}};
  return rows;
}

}  // namespace

double LevelGrid::level(int i) const {
  if (count <= 1) return 0.5 * (lower + upper);
  const double width = (upper - lower) / count;
  return lower + (i + 0.5) * width;
}

int LevelGrid::nearest(double x) const {
  if (count <= 1 || !(upper > lower)) return 0;
  const double width = (upper - lower) / count;
  const double pos = std::floor((x - lower) / width);
  return static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(count - 1)));
}

ChainEstimate estimate_level_transitions(const LevelGrid& grid, const std::function<double(double, Rng&)>& step,
                                         int samples, std::uint64_t seed, std::uint64_t component) {
  if (grid.count < 1) throw ValidationError("level grid needs at least one level");
  if (samples < 1) throw ValidationError("need at least one transition sample per level");
  ChainEstimate out;
  out.rows.resize(static_cast<std::size_t>(grid.count));
  std::vector<int> counts(static_cast<std::size_t>(grid.count));
  for (int i = 0; i < grid.count; ++i) {
    Rng rng = make_stream(seed, {static_cast<std::uint64_t>(Stream::Discretization), component,
                                 static_cast<std::uint64_t>(i)});
    std::fill(counts.begin(), counts.end(), 0);
    int total = 0;
    const double from = grid.level(i);
    for (int n = 0; n < samples; ++n) {
      const double x = step(from, rng);
      if (!std::isfinite(x)) continue;
      ++counts[static_cast<std::size_t>(grid.nearest(x))];
      ++total;
    }
    auto& row = out.rows[static_cast<std::size_t>(i)];
    if (total == 0) {
      row = {{i, 1.0}};
      out.empty_rows.push_back(i);
      continue;
    }
    for (int j = 0; j < grid.count; ++j) {
      const int c = counts[static_cast<std::size_t>(j)];
      if (c > 0) row.push_back({j, static_cast<double>(c) / total});
    }
  }
  return out;
}

void DiscretizationLevels::validate() const {
  if (time < 1 || resource < 2 || price < 1 || demand < 1 || wind < 1) {
    throw ValidationError("discretization needs at least one level per dimension and two resource levels");
  }
  if (time != 1 && time != storage::kStepsPerDay) throw ValidationError("time levels must be 1 or 96");
}

mdp::PreState DiscreteStorageModel::state(int s) const {
  if (s < 0 || s >= mdp.state_count()) throw ValidationError("state index out of range");
  const int r = mdp.endogenous_of(s);
  const int e = mdp.exogenous_of(s);
  mdp::PreState out;
  out.coords.resize(storage::kObservableCoords);
  out.coords[storage::kTime] = exo_time[static_cast<std::size_t>(e)];
  out.coords[storage::kResource] = resource_levels[static_cast<std::size_t>(r)];
  out.coords[storage::kWind] = exo_wind[static_cast<std::size_t>(e)];
  out.coords[storage::kDemand] = exo_demand[static_cast<std::size_t>(e)];
  out.coords[storage::kPrice] = exo_price[static_cast<std::size_t>(e)];
  out.index = s;
  return out;
}

std::vector<std::string> DiscreteStorageModel::coordinate_names() const {
  return {"time", "resource", "wind", "demand", "price"};
}

Eigen::MatrixXd DiscreteStorageModel::coordinates() const {
  Eigen::MatrixXd out(mdp.state_count(), storage::kObservableCoords);
  for (int s = 0; s < mdp.state_count(); ++s) out.row(s) = state(s).coords.transpose();
  return out;
}

std::vector<TransitionEntry> DiscreteStorageModel::resource_rounding(double r) const {
  const int count = static_cast<int>(resource_levels.size());
  const double lo = resource_levels.front();
  const double step = (resource_levels.back() - lo) / (count - 1);
  const double pos = (std::clamp(r, lo, resource_levels.back()) - lo) / step;
  const int below = std::clamp(static_cast<int>(std::floor(pos)), 0, count - 2);
  const double w = pos - below;
  if (w < kRoundingSnap) return {{below, 1.0}};
  if (w > 1.0 - kRoundingSnap) return {{below + 1, 1.0}};
  return {{below, 1.0 - w}, {below + 1, w}};
}

DiscreteStorageModel discretize_environment(const storage::StorageEnvironment& environment,
                                            const DiscretizationLevels& levels, const ActionLatticeSize& lattice,
                                            double discount, int mc_samples, std::uint64_t seed) {
  environment.validate();
  levels.validate();
  if (lattice.grid < 1 || lattice.discharge < 1) throw ValidationError("action lattice needs at least one level");
  if (mc_samples < kMinTransitionSamples) throw ValidationError("need at least 10^4 transition samples per level");
  if ((levels.time > 1) != environment.time_dependent) {
    throw ValidationError("time levels must match whether the environment is time dependent");
  }
  if (!environment.has_wind() && levels.wind != 1) throw ValidationError("problem has no wind dimension");
  if (!environment.has_demand() && levels.demand != 1) throw ValidationError("problem has no demand dimension");

  const auto& models = environment.models;
  DiscreteStorageModel m;
  m.environment = environment;
  m.levels = levels;

  const double floor = environment.storage.resource_floor;
  m.resource_levels.resize(static_cast<std::size_t>(levels.resource));
  for (int i = 0; i < levels.resource; ++i) {
    m.resource_levels[static_cast<std::size_t>(i)] = floor + (1.0 - floor) * i / (levels.resource - 1);
  }
  const double price_sd = models.price.stationary_sd(storage::kStepYears);
  m.price_grid = {models.price.long_run_level - kGridWidth * price_sd,
                  models.price.long_run_level + kGridWidth * price_sd, levels.price};
  const double wind_sd = models.wind.stationary_sd();
  m.wind_grid = {-kGridWidth * wind_sd, kGridWidth * wind_sd, levels.wind};
  const double demand_sd = models.demand.stationary_sd();
  m.demand_grid = {-kGridWidth * demand_sd, kGridWidth * demand_sd, levels.demand};

  auto chain = [&](const LevelGrid& grid, Component component, const char* name,
                   const std::function<double(double, Rng&)>& step) {
    if (grid.count == 1) return identity_chain(1);
    ChainEstimate est = estimate_level_transitions(grid, step, mc_samples, seed, component);
    for (int i : est.empty_rows) m.empty_rows.push_back(std::string(name) + " level " + std::to_string(i));
    return est.rows;
  };
  const storage::CalendarPosition calendar{};
  const auto price_rows = chain(m.price_grid, kPriceChain, "price", [&](double y, Rng& rng) {
    return storage::price_step(models.price, y, calendar, storage::kStepYears, rng).deseasonalized;
  });
  const auto wind_rows = chain(m.wind_grid, kWindChain, "wind", [&](double y, Rng& rng) {
    return storage::wind_step(models.wind, y, environment.storage.step_seconds, rng).deviation;
  });
  const auto demand_rows = chain(m.demand_grid, kDemandChain, "demand", [&](double y, Rng& rng) {
    return storage::demand_step(models.demand, y, calendar, rng).deseasonalized;
  });

  const int lt = levels.time, lp = levels.price, ld = levels.demand, lw = levels.wind;
  const int exo = lt * lp * ld * lw;
  auto exo_index = [&](int t, int p, int d, int w) { return ((t * lp + p) * ld + d) * lw + w; };

  m.exo_time.resize(static_cast<std::size_t>(exo));
  m.exo_wind.resize(static_cast<std::size_t>(exo));
  m.exo_demand.resize(static_cast<std::size_t>(exo));
  m.exo_price.resize(static_cast<std::size_t>(exo));
  DiscreteMdp::Builder builder(levels.resource, exo, discount);
  std::vector<TransitionEntry> row;
  for (int t = 0; t < lt; ++t) {
    for (int p = 0; p < lp; ++p) {
      for (int d = 0; d < ld; ++d) {
        for (int w = 0; w < lw; ++w) {
          const int e = exo_index(t, p, d, w);
          const auto ue = static_cast<std::size_t>(e);
          m.exo_time[ue] = t;
          m.exo_price[ue] = environment.price(m.price_grid.level(p), t);
          m.exo_demand[ue] = environment.demand(m.demand_grid.level(d), t);
          m.exo_wind[ue] = environment.wind_energy(m.wind_grid.level(w));

          row.clear();
          const int next_t = (t + 1) % lt;
          for (const auto& pe : price_rows[static_cast<std::size_t>(p)]) {
            for (const auto& de : demand_rows[static_cast<std::size_t>(d)]) {
              for (const auto& we : wind_rows[static_cast<std::size_t>(w)]) {
                row.push_back({exo_index(next_t, pe.target, de.target, we.target),
                               pe.probability * de.probability * we.probability});
              }
            }
          }
          builder.set_exogenous_row(e, row);
        }
      }
    }
  }

  for (int r = 0; r < levels.resource; ++r) {
    for (int e = 0; e < exo; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      storage::StorageState s;
      s.resource = m.resource_levels[static_cast<std::size_t>(r)];
      s.wind_energy = m.exo_wind[ue];
      s.demand = m.exo_demand[ue];
      s.price = m.exo_price[ue];
      const auto box = storage::feasible_action_box(s, environment.storage);
      int added = 0;
      for (const auto& [grid_flow, discharge] : storage::action_lattice(box, lattice.grid, lattice.discharge)) {
        storage::FlowDecision f;
        try {
          f = storage::derive_flows(s, grid_flow, discharge, environment.storage);
        } catch (const InfeasibleFlow&) {
          continue;
        }
        const double next = storage::storage_transition(s, f, environment.storage);
        builder.add_action(r * exo + e, storage::contribution(s, f),
                           m.resource_rounding(next));
        m.action_grid_flow.push_back(f.grid_to_storage);
        m.action_discharge_flow.push_back(f.storage_to_demand);
        m.action_post_resource.push_back(next);
        ++added;
      }
      if (added == 0) throw NoFeasibleAction("discretized state has no feasible action");
    }
  }
  m.mdp = builder.build();
  return m;
}

DiscreteStorageMdp::DiscreteStorageMdp(std::shared_ptr<const DiscreteStorageModel> model)
    : model_(std::move(model)) {
  if (!model_) throw ValidationError("discrete storage model is missing");
}

int DiscreteStorageMdp::state_index(const mdp::PreState& pre) const {
  if (pre.index < 0 || pre.index >= model_->mdp.state_count()) throw ValidationError("state index out of range");
  return static_cast<int>(pre.index);
}

mdp::PreState DiscreteStorageMdp::sample_start_state(Rng& rng) const {
  return model_->state(uniform_index(rng, model_->mdp.state_count()));
}

mdp::PostState DiscreteStorageMdp::sample_initial_post_state(Rng& rng) const {
  const double u_resource = uniform01(rng);
  const int e = uniform_index(rng, model_->mdp.exogenous_count());
  const double floor = model_->resource_levels.front();
  mdp::PostState post = model_->state(model_->mdp.state_of(0, e));
  post.coords[storage::kResource] = floor + u_resource * (1.0 - floor);
  post.index = e;
  return post;
}

mdp::PreState DiscreteStorageMdp::exogenous_step(const mdp::PostState& post, Rng& rng) const {
  const auto& m = *model_;
  const double u_resource = uniform01(rng);
  const double u_exo = uniform01(rng);
  if (post.index < 0 || post.index >= m.mdp.exogenous_count()) throw ValidationError("post-state index out of range");

  auto pick = [](const auto& entries, double u) {
    double acc = 0.0;
    for (const auto& entry : entries) {
      acc += entry.probability;
      if (u < acc) return entry.target;
    }
    return entries.back().target;
  };
  const int r = pick(m.resource_rounding(post.coords[storage::kResource]), u_resource);
  const int e = pick(m.mdp.exogenous_row(static_cast<int>(post.index)), u_exo);
  return m.state(m.mdp.state_of(r, e));
}

void DiscreteStorageMdp::feasible_actions(const mdp::PreState& pre, std::vector<mdp::Action>& out) const {
  const int s = state_index(pre);
  const int n = model_->mdp.action_count(s);
  out.resize(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const auto id = static_cast<std::size_t>(model_->mdp.action_id(s, a));
    out[static_cast<std::size_t>(a)].index = a;
    out[static_cast<std::size_t>(a)].value = {model_->action_grid_flow[id], model_->action_discharge_flow[id]};
  }
}

double DiscreteStorageMdp::evaluate_action(const mdp::PreState& pre, const mdp::Action& action,
                                           mdp::PostState& post) const {
  const int s = state_index(pre);
  if (action.index < 0 || action.index >= model_->mdp.action_count(s)) throw ValidationError("action out of range");
  post = pre;
  post.coords[storage::kResource] =
      model_->action_post_resource[static_cast<std::size_t>(model_->mdp.action_id(s, action.index))];
  post.index = model_->mdp.exogenous_of(s);
  return model_->mdp.contribution(s, action.index);
}

mdp::PostState DiscreteStorageMdp::apply_action(const mdp::PreState& pre, const mdp::Action& action) const {
  mdp::PostState post;
  evaluate_action(pre, action, post);
  return post;
}

double DiscreteStorageMdp::contribution(const mdp::PreState& pre, const mdp::Action& action) const {
  mdp::PostState post;
  return evaluate_action(pre, action, post);
}

std::uint64_t DiscreteStorageMdp::exogenous_fingerprint(const mdp::PreState& pre) const {
  Fingerprint h;
  h.add(static_cast<std::uint64_t>(model_->mdp.exogenous_of(state_index(pre))));
  return h.value();
}

}  // namespace adp::exact
