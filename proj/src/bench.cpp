#include "adp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include "adp/errors.hpp"
#include "adp/timeseries_io.hpp"
#include "adp/version.hpp"

namespace adp::bench {

namespace {

using storage::ProblemKind;

struct TableRow {
  const char* id;
  ProblemKind kind;
  int time, resource, price, demand, wind;
  double wind_ratio, storage_ratio, rte;
  ChargeRate rate;
  bool continuous;
};

constexpr ProblemKind kFull = ProblemKind::Full;
constexpr ProblemKind kBA = ProblemKind::BatteryArbitrage;
constexpr ChargeRate kC1 = ChargeRate::C1;
constexpr ChargeRate kC10 = ChargeRate::C10;

// Battery-arbitrage rows list no storage ratio; they use the smaller device.
constexpr TableRow kProblems[] = {
    {"1", kFull, 1, 33, 20, 1, 10, 0.1, 2.5, 0.81, kC10, false},
    {"2", kFull, 1, 33, 20, 1, 10, 0.1, 2.5, 0.81, kC1, false},
    {"3", kFull, 1, 33, 20, 1, 10, 0.1, 2.5, 0.70, kC10, false},
    {"4", kFull, 1, 33, 20, 1, 10, 0.1, 2.5, 0.70, kC1, false},
    {"5", kFull, 1, 33, 20, 1, 10, 0.2, 2.5, 0.81, kC10, false},
    {"6", kFull, 1, 33, 20, 1, 10, 0.2, 2.5, 0.81, kC1, false},
    {"7", kFull, 1, 33, 20, 1, 10, 0.2, 2.5, 0.70, kC10, false},
    {"8", kFull, 1, 33, 20, 1, 10, 0.2, 2.5, 0.70, kC1, false},
    {"9", kFull, 1, 33, 20, 1, 10, 0.1, 5.0, 0.81, kC10, false},
    {"10", kFull, 1, 33, 20, 1, 10, 0.1, 5.0, 0.81, kC1, false},
    {"11", kFull, 1, 33, 20, 1, 10, 0.1, 5.0, 0.70, kC10, false},
    {"12", kFull, 1, 33, 20, 1, 10, 0.1, 5.0, 0.70, kC1, false},
    {"13", kFull, 1, 33, 20, 1, 10, 0.2, 5.0, 0.81, kC10, false},
    {"14", kFull, 1, 33, 20, 1, 10, 0.2, 5.0, 0.81, kC1, false},
    {"15", kFull, 1, 33, 20, 1, 10, 0.2, 5.0, 0.70, kC10, false},
    {"16", kFull, 1, 33, 20, 1, 1, 0.2, 5.0, 0.70, kC1, false},
    {"17", kBA, 96, 33, 20, 1, 1, 0.0, 2.5, 0.81, kC10, false},
    {"18", kBA, 96, 33, 20, 1, 1, 0.0, 2.5, 0.81, kC1, false},
    {"19", kBA, 96, 33, 20, 1, 1, 0.0, 2.5, 0.70, kC10, false},
    {"20", kBA, 96, 33, 20, 1, 1, 0.0, 2.5, 0.70, kC1, false},
    {"C1", kFull, 96, 0, 0, 0, 0, 0.1, 2.5, 0.81, kC10, true},
    {"C2", kFull, 96, 0, 0, 0, 0, 0.1, 5.0, 0.81, kC10, true},
    {"C3", kBA, 96, 0, 0, 0, 0, 0.0, 2.5, 0.81, kC10, true},
    {"C4", kFull, 1, 0, 0, 0, 0, 0.1, 5.0, 0.81, kC10, true},
    {"C5", kFull, 1, 0, 0, 0, 0, 0.1, 2.5, 0.81, kC1, true},
    {"C6", kFull, 1, 0, 0, 0, 0, 0.1, 2.5, 0.70, kC1, true},
    {"C7", kBA, 1, 0, 0, 0, 0, 0.0, 2.5, 0.81, kC10, true},
    {"C8", kFull, 1, 0, 0, 0, 0, 0.1, 5.0, 0.81, kC1, true},
    {"C9", kFull, 1, 0, 0, 0, 0, 0.1, 5.0, 0.70, kC1, true},
    {"C10", kFull, 1, 0, 0, 0, 0, 0.2, 2.5, 0.81, kC1, true},
};

constexpr double kResourceFloor = 0.2;
constexpr int kStepsPerHour = 4;

int scaled_count(int levels, double scale, int minimum) {
  if (levels <= 1) return levels;
  return std::max(minimum, static_cast<int>(std::lround(levels * scale)));
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv(const std::string& s) {
  Fingerprint h;
  h.add_bytes(s.data(), s.size());
  return h.value();
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int problem_order(const std::string& id) {
  const auto ids = problem_ids();
  const auto it = std::find(ids.begin(), ids.end(), id);
  return it == ids.end() ? static_cast<int>(ids.size()) : static_cast<int>(it - ids.begin());
}

}  // namespace

void BenchmarkProblem::validate() const {
  if (!(scale > 0.0 && scale <= 1.0)) throw ValidationError("scale factor must lie in (0, 1]");
  if (!(round_trip_efficiency > 0.0 && round_trip_efficiency <= 1.0)) {
    throw ValidationError("round-trip efficiency must lie in (0, 1]");
  }
  if (!(storage_ratio > 0.0) || !(wind_ratio >= 0.0)) throw ValidationError("storage and wind ratios out of range");
  if (!continuous) levels.validate();
}

std::vector<std::string> problem_ids() {
  std::vector<std::string> ids;
  for (const auto& row : kProblems) ids.emplace_back(row.id);
  return ids;
}

BenchmarkProblem problem_definition(const std::string& id, double scale) {
  const TableRow* row = nullptr;
  for (const auto& r : kProblems) {
    if (id == r.id) row = &r;
  }
  if (row == nullptr) throw UnknownProblem("unknown problem '" + id + "'; expected 1-20 or C1-C10");
  BenchmarkProblem p;
  p.id = row->id;
  p.kind = row->kind;
  p.wind_ratio = row->wind_ratio;
  p.storage_ratio = row->storage_ratio;
  p.round_trip_efficiency = row->rte;
  p.charge_rate = row->rate;
  p.continuous = row->continuous;
  p.time_dependent = row->time > 1;
  p.scale = scale;
  p.scaled = scale != 1.0;
  p.levels.time = row->time;
  if (!p.continuous) {
    p.levels.resource = scaled_count(row->resource, scale, 2);
    p.levels.price = scaled_count(row->price, scale, 1);
    p.levels.demand = scaled_count(row->demand, scale, 1);
    p.levels.wind = scaled_count(row->wind, scale, 1);
  } else {
    p.levels.resource = p.levels.price = p.levels.demand = p.levels.wind = 0;
  }
  p.validate();
  return p;
}

storage::StorageEnvironment make_environment(const BenchmarkProblem& problem, const storage::StochasticModels& models) {
  problem.validate();
  storage::StorageEnvironment env;
  env.kind = problem.kind;
  env.models = models;
  env.mean_demand = kHourlyLoad / kStepsPerHour;
  env.wind_ratio = problem.wind_ratio;
  env.time_dependent = problem.time_dependent;
  env.storage.capacity = problem.storage_ratio * kHourlyLoad;
  const double hours_to_fill = problem.charge_rate == ChargeRate::C10 ? 10.0 : 1.0;
  const double per_step = 1.0 / (hours_to_fill * kStepsPerHour);
  env.storage.max_charge_fraction = per_step;
  env.storage.max_discharge_fraction = -per_step;
  env.storage.eta_charge = std::sqrt(problem.round_trip_efficiency);
  env.storage.eta_discharge = std::sqrt(problem.round_trip_efficiency);
  env.storage.resource_floor = kResourceFloor;
  env.storage.allow_sell_to_grid = true;
  env.storage.step_seconds = storage::kStepSeconds;
  env.validate();
  return env;
}

nlohmann::json to_json(const BenchmarkProblem& p) {
  nlohmann::json j;
  j["id"] = p.id;
  j["type"] = p.kind == ProblemKind::Full ? "Full" : "BA";
  j["continuous"] = p.continuous;
  j["time_dependent"] = p.time_dependent;
  j["levels"] = {{"time", p.levels.time},
                 {"resource", p.levels.resource},
                 {"price", p.levels.price},
                 {"demand", p.levels.demand},
                 {"wind", p.levels.wind}};
  j["wind_ratio"] = p.wind_ratio;
  j["storage_ratio"] = p.storage_ratio;
  j["round_trip_efficiency"] = p.round_trip_efficiency;
  j["charge_rate"] = p.charge_rate == ChargeRate::C10 ? "C/10" : "C/1";
  j["scale"] = p.scale;
  j["scaled"] = p.scaled;
  return j;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::Myopic: return "myopic";
    case Method::LSAPI: return "lsapi";
    case Method::IVAPI: return "ivapi";
    case Method::LSProjected: return "ls-projected";
    case Method::IVProjected: return "iv-projected";
    case Method::DirectPolicySearch: return "dps";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Method m : {Method::Exact, Method::Myopic, Method::LSAPI, Method::IVAPI, Method::LSProjected,
                   Method::IVProjected, Method::DirectPolicySearch}) {
    if (n == to_string(m)) return m;
  }
  if (n == "directpolicysearch" || n == "direct-policy-search") return Method::DirectPolicySearch;
  throw ValidationError("unknown method '" + name +
                        "'; expected exact, myopic, lsapi, ivapi, ls-projected, iv-projected or dps");
}

bool is_api(Method m) {
  return m == Method::LSAPI || m == Method::IVAPI || m == Method::LSProjected || m == Method::IVProjected;
}

est::EstimatorKind estimator_for(Method m) {
  switch (m) {
    case Method::LSAPI: return est::EstimatorKind::LeastSquares;
    case Method::IVAPI: return est::EstimatorKind::InstrumentalVariables;
    case Method::LSProjected: return est::EstimatorKind::LeastSquaresProjected;
    case Method::IVProjected: return est::EstimatorKind::InstrumentalVariablesProjected;
    default: throw ValidationError("method " + to_string(m) + " does not use a Bellman estimator");
  }
}

void ExperimentConfig::validate() const {
  const BenchmarkProblem p = problem_definition(problem, scale);
  if (runs < 1) throw ValidationError("runs must be at least 1");
  if (!(discount >= 0.0 && discount < 1.0)) throw ValidationError("discount must lie in [0, 1)");
  if (evaluation_paths < 1 || horizon < 1) throw ValidationError("evaluation needs paths and a positive horizon");
  if (basis_degree != 1 && basis_degree != 2) throw ValidationError("basis degree must be 1 or 2");
  if (grid_levels < 1 || discharge_levels < 1) throw ValidationError("action lattice needs at least one level");
  if (mc_samples < exact::kMinTransitionSamples) throw ValidationError("need at least 10^4 transition samples");
  if (is_api(method) && (m_iterations < 1 || n_samples < 1)) {
    throw ValidationError("policy iteration needs positive M and N");
  }
  if (method == Method::DirectPolicySearch &&
      (search.budget < 6 || search.restarts < 1 || search.paths_per_observation < 1 || search.horizon < 1)) {
    throw ValidationError("search needs a budget of at least 6, restarts, paths and a horizon");
  }
  if (method == Method::Exact && p.continuous) throw ValidationError("continuous problems have no exact solution");
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["problem"] = c.problem;
  j["scale"] = c.scale;
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  j["runs"] = c.runs;
  j["discount"] = c.discount;
  j["m_iterations"] = c.m_iterations;
  j["n_samples"] = c.n_samples;
  j["estimator"] = is_api(c.method) ? nlohmann::json(std::string(est::to_string(estimator_for(c.method))))
                                    : nlohmann::json(nullptr);
  j["evaluation_paths"] = c.evaluation_paths;
  j["horizon"] = c.horizon;
  j["basis_degree"] = c.basis_degree;
  j["mc_samples"] = c.mc_samples;
  j["discretization_seed"] = c.discretization_seed;
  j["action_levels"] = {{"grid", c.grid_levels}, {"discharge", c.discharge_levels}};
  j["search"] = {{"budget", c.search.budget},
                 {"restarts", c.search.restarts},
                 {"paths_per_observation", c.search.paths_per_observation},
                 {"horizon", c.search.horizon}};
  j["models"] = c.models_path.empty() ? nlohmann::json(nullptr) : nlohmann::json(c.models_path);
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    const int version = j.value("schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion) {
      throw ValidationError("unsupported config schema version " + std::to_string(version));
    }
    static const char* const known[] = {"schema_version", "problem", "scale", "method", "seed", "runs", "discount",
                                        "m_iterations", "n_samples", "estimator", "evaluation_paths", "horizon",
                                        "basis_degree", "mc_samples", "discretization_seed", "action_levels",
                                        "search", "models"};
    for (const auto& [key, _] : j.items()) {
      if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
        throw ValidationError("unknown config key '" + key + "'");
      }
    }
    if (j.contains("problem")) {
      c.problem = j["problem"].is_number_integer() ? std::to_string(j["problem"].get<int>())
                                                    : j["problem"].get<std::string>();
    }
    c.scale = j.value("scale", c.scale);
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.runs = j.value("runs", c.runs);
    c.discount = j.value("discount", c.discount);
    c.m_iterations = j.value("m_iterations", c.m_iterations);
    c.n_samples = j.value("n_samples", c.n_samples);
    if (j.contains("estimator") && !j["estimator"].is_null() && is_api(c.method) &&
        est::parse_estimator(j["estimator"].get<std::string>()) != estimator_for(c.method)) {
      throw ValidationError("estimator does not match the method");
    }
    c.evaluation_paths = j.value("evaluation_paths", c.evaluation_paths);
    c.horizon = j.value("horizon", c.horizon);
    c.basis_degree = j.value("basis_degree", c.basis_degree);
    c.mc_samples = j.value("mc_samples", c.mc_samples);
    c.discretization_seed = j.value("discretization_seed", c.discretization_seed);
    if (j.contains("action_levels")) {
      c.grid_levels = j["action_levels"].value("grid", c.grid_levels);
      c.discharge_levels = j["action_levels"].value("discharge", c.discharge_levels);
    }
    if (j.contains("search")) {
      const auto& s = j["search"];
      c.search.budget = s.value("budget", c.search.budget);
      c.search.restarts = s.value("restarts", c.search.restarts);
      c.search.paths_per_observation = s.value("paths_per_observation", c.search.paths_per_observation);
      c.search.horizon = s.value("horizon", c.search.horizon);
    }
    if (j.contains("models") && !j["models"].is_null()) c.models_path = j["models"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  try {
    return config_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string config_hash(const ExperimentConfig& config) { return hex16(fnv(to_json(config).dump())); }

BuildOptions build_options(const ExperimentConfig& config) {
  BuildOptions o;
  o.discount = config.discount;
  o.mc_samples = config.mc_samples;
  o.seed = config.discretization_seed;
  o.lattice = {config.grid_levels, config.discharge_levels};
  o.basis_degree = config.basis_degree;
  return o;
}

BuiltProblem build_problem(const BenchmarkProblem& problem, const storage::StochasticModels& models,
                           const BuildOptions& options) {
  BuiltProblem b;
  b.problem = problem;
  b.environment = make_environment(problem, models);
  b.discount = options.discount;
  const auto& env = b.environment;
  const double floor = env.storage.resource_floor;

  std::vector<int> dims;
  std::vector<mdp::DimensionScaling> scaling;
  auto add_dim = [&](int coord, double lo, double hi) {
    if (hi > lo) {
      dims.push_back(coord);
      scaling.push_back({lo, hi});
    }
  };

  if (!problem.continuous) {
    auto model = std::make_shared<exact::DiscreteStorageModel>(exact::discretize_environment(
        env, problem.levels, options.lattice, options.discount, options.mc_samples, options.seed));
    auto range = [](const std::vector<double>& v) {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return std::pair{*lo, *hi};
    };
    add_dim(storage::kTime, 0.0, problem.levels.time - 1.0);
    add_dim(storage::kResource, floor, 1.0);
    if (problem.levels.wind > 1) add_dim(storage::kWind, range(model->exo_wind).first, range(model->exo_wind).second);
    if (problem.levels.demand > 1) {
      add_dim(storage::kDemand, range(model->exo_demand).first, range(model->exo_demand).second);
    }
    if (problem.levels.price > 1) add_dim(storage::kPrice, range(model->exo_price).first, range(model->exo_price).second);
    double bound = 0.0;
    for (int s = 0; s < model->mdp.state_count(); ++s) {
      for (int a = 0; a < model->mdp.action_count(s); ++a) bound = std::max(bound, std::abs(model->mdp.contribution(s, a)));
    }
    b.contribution_bound = bound;
    auto sim = std::make_shared<exact::DiscreteStorageMdp>(model);
    b.sample_start_state = [sim](Rng& rng) { return sim->sample_start_state(rng); };
    b.simulator = sim;
    b.discrete = model;

    Fingerprint models_hash;
    const std::string models_doc = storage::models_to_json(models).dump();
    models_hash.add_bytes(models_doc.data(), models_doc.size());
    std::ostringstream key;
    key.precision(17);
    key << "problem=" << problem.id << ";levels=" << problem.levels.time << 'x' << problem.levels.resource << 'x'
        << problem.levels.price << 'x' << problem.levels.demand << 'x' << problem.levels.wind
        << ";discount=" << options.discount << ";mc=" << options.mc_samples << ";seed=" << options.seed
        << ";lattice=" << options.lattice.grid << 'x' << options.lattice.discharge
        << ";models=" << hex16(models_hash.value());
    b.exact_key = key.str();
  } else {
    auto sim = std::make_shared<storage::ContinuousStorageMdp>(env, options.continuous.grid,
                                                               options.continuous.discharge);
    auto add_range = [&](int coord) {
      const auto [lo, hi] = sim->coordinate_range(coord);
      add_dim(coord, lo, hi);
    };
    if (env.time_dependent) add_range(storage::kTime);
    add_range(storage::kResource);
    if (env.has_wind()) add_range(storage::kWind);
    if (env.has_demand()) add_range(storage::kDemand);
    add_range(storage::kPrice);
    b.contribution_bound = std::numeric_limits<double>::quiet_NaN();
    b.sample_start_state = [sim](Rng& rng) { return sim->sample_start_state(rng); };
    b.simulator = sim;
  }
  b.basis = {dims, options.basis_degree, scaling};
  b.basis.validate();

  b.search_basis = {{storage::kResource}, 2, {{floor, 1.0}}};
  // Storage value on the scale of a full usable charge bought at the long-run price.
  const double typical_price = std::exp(env.models.price.long_run_level) - env.models.price.shift;
  const double scale = env.storage.capacity * (1.0 - floor) * std::max(1.0, typical_price);
  b.search_box.lower = Eigen::Vector2d(0.0, -1.0) * scale;
  b.search_box.upper = Eigen::Vector2d(2.0, 1.0) * scale;
  return b;
}

BuiltProblem build_problem(const ExperimentConfig& config) {
  config.validate();
  const storage::StochasticModels models =
      config.models_path.empty() ? storage::default_models() : storage::load_models(config.models_path);
  return build_problem(problem_definition(config.problem, config.scale), models, build_options(config));
}

exact::ExactSolution solve_exact(const BuiltProblem& built, double epsilon) {
  if (!built.discrete) throw ValidationError("problem " + built.problem.id + " is continuous; no exact solution");
  exact::ExactSolution sol;
  sol.problem_key = built.exact_key;
  sol.discount = built.discount;
  exact::ValueIterationOptions opts;
  opts.epsilon = epsilon;
  sol.value = exact::value_iteration(built.discrete->mdp, opts);
  sol.policy = exact::extract_greedy_policy(built.discrete->mdp, sol.value.values);
  sol.coordinate_names = built.discrete->coordinate_names();
  sol.coordinates = built.discrete->coordinates();
  return sol;
}

std::filesystem::path exact_cache_path(const std::filesystem::path& dir, const BuiltProblem& built) {
  return dir / ("exact-" + built.problem.id + "-" + hex16(fnv(built.exact_key)) + ".bin");
}

std::optional<exact::ExactSolution> load_exact(const std::filesystem::path& dir, const BuiltProblem& built) {
  const auto path = exact_cache_path(dir, built);
  if (!std::filesystem::exists(path)) return std::nullopt;
  exact::ExactSolution sol = exact::read_solution_binary(path);
  if (sol.problem_key != built.exact_key) {
    throw ParameterMismatch(path.string() + " was solved for a different discretization");
  }
  return sol;
}

std::filesystem::path store_exact(const std::filesystem::path& dir, const BuiltProblem& built,
                                  const exact::ExactSolution& solution) {
  std::filesystem::create_directories(dir);
  const auto path = exact_cache_path(dir, built);
  exact::write_solution_binary(path, solution);
  return path;
}

PercentOfOptimal percent_of_optimal(const std::vector<double>& policy_values, const std::vector<double>& optimal_values) {
  if (policy_values.size() != optimal_values.size()) throw DimensionMismatch("one optimal value per path");
  PercentOfOptimal out;
  double sum = 0.0;
  for (std::size_t i = 0; i < policy_values.size(); ++i) {
    if (optimal_values[i] == 0.0) {
      ++out.excluded_zero_optimal;
      continue;
    }
    sum += policy_values[i] / optimal_values[i];
    ++out.used;
  }
  out.mean = out.used > 0 ? sum / out.used : std::numeric_limits<double>::quiet_NaN();
  return out;
}

namespace {

mdp::GreedyPolicy search_policy(const BuiltProblem& built, const Eigen::VectorXd& theta) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(built.search_basis.feature_count());
  w.tail(theta.size()) = theta;
  return {{w}, built.search_basis, built.discount};
}

mdp::GreedyPolicy train(const ExperimentConfig& config, const BuiltProblem& built, std::uint64_t seed,
                        RunRecord& record) {
  if (config.method == Method::Myopic) return mdp::myopic_policy(built.basis, built.discount);
  if (is_api(config.method)) {
    mdp::ApiConfig api;
    api.iterations = config.m_iterations;
    api.samples = config.n_samples;
    api.estimator = estimator_for(config.method);
    api.seed = seed;
    try {
      return mdp::api_loop(api, *built.simulator, built.basis, built.discount).policy;
    } catch (const EstimatorFailed& e) {
      // Keep the last policy that was estimated; the failure is recorded in the report.
      record.estimator_failed_at = e.iteration();
      mdp::GreedyPolicy p = mdp::myopic_policy(built.basis, built.discount);
      if (e.last_weights().size() == p.weights.theta.size()) p.weights.theta = e.last_weights();
      return p;
    }
  }
  if (config.method == Method::DirectPolicySearch) {
    const int k = config.search.paths_per_observation;
    Rng start_rng = make_stream(seed, Stream::SearchPath, 0);
    std::vector<mdp::PreState> starts;
    for (int i = 0; i < k; ++i) starts.push_back(built.sample_start_state(start_rng));
    mdp::SimulationOptions sim;
    sim.horizon = config.search.horizon;
    sim.seed = mix_seed(seed, {static_cast<std::uint64_t>(Stream::SearchPath), 1});
    // Common random numbers: every candidate sees the same starts and exogenous paths.
    auto objective = [&](const Eigen::VectorXd& theta, int) {
      const auto result = mdp::simulate_policy_value(search_policy(built, theta), *built.simulator, starts, sim);
      search::Observation o;
      o.mean = result.mean();
      if (k > 1) {
        double ss = 0.0;
        for (double r : result.returns) ss += (r - o.mean) * (r - o.mean);
        o.variance = ss / (k - 1) / k;
      }
      return o;
    };
    search::SearchConfig sc;
    sc.budget = config.search.budget;
    sc.restarts = config.search.restarts;
    sc.seed = seed;
    const search::SearchOutcome outcome = search::direct_policy_search(objective, built.search_box, sc);
    return search_policy(built, outcome.theta);
  }
  throw ValidationError("method " + to_string(config.method) + " has no trained policy");
}

}  // namespace

EvaluationReport run_experiment(const ExperimentConfig& config, const BuiltProblem& built,
                                const exact::ExactSolution* exact) {
  config.validate();
  if (config.problem != built.problem.id) throw ValidationError("config and built problem disagree");
  const bool discrete = built.discrete != nullptr;
  if (discrete) {
    if (exact == nullptr) {
      throw MissingExactSolution("problem " + built.problem.id + " needs a stored exact solution; run solve-exact first");
    }
    if (exact->problem_key != built.exact_key) throw ParameterMismatch("exact solution belongs to another discretization");
  }

  EvaluationReport report;
  report.config = config;
  report.problem = built.problem;
  report.metric = discrete ? "percent_of_optimal" : "raw_value";

  for (int r = 0; r < config.runs; ++r) {
    const auto started = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.run = r;
    rec.seed = config.seed + static_cast<std::uint64_t>(r);
    Rng start_rng = make_stream(rec.seed, Stream::EvaluationStart, 0);
    std::vector<mdp::PreState> starts;
    starts.reserve(static_cast<std::size_t>(config.evaluation_paths));
    for (int i = 0; i < config.evaluation_paths; ++i) starts.push_back(built.sample_start_state(start_rng));
    std::vector<double> optimal;
    if (discrete) {
      for (const auto& s : starts) optimal.push_back(exact->value.values(s.index));
    }

    std::vector<double> returns;
    if (config.method == Method::Exact) {
      // The optimal policy's value is known exactly; no simulation needed.
      returns = optimal;
    } else {
      const mdp::GreedyPolicy policy = train(config, built, rec.seed, rec);
      rec.weights.assign(policy.weights.theta.data(), policy.weights.theta.data() + policy.weights.theta.size());
      mdp::SimulationOptions sim;
      sim.horizon = config.horizon;
      sim.seed = rec.seed;
      sim.contribution_bound = built.contribution_bound;
      const auto result = mdp::simulate_policy_value(policy, *built.simulator, starts, sim);
      returns = result.returns;
      rec.path_hash = result.path_hash;
      report.truncation_warning = report.truncation_warning || result.truncation_warning;
    }
    rec.value = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    if (discrete) {
      const PercentOfOptimal pct = percent_of_optimal(returns, optimal);
      rec.percent = pct.mean;
      rec.excluded_zero_optimal = pct.excluded_zero_optimal;
    }
    rec.seconds = seconds_since(started);
    report.runs.push_back(std::move(rec));
  }

  std::vector<double> scores;
  for (const auto& rec : report.runs) scores.push_back(discrete ? *rec.percent : rec.value);
  const double n = static_cast<double>(scores.size());
  report.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  if (scores.size() > 1) {
    double ss = 0.0;
    for (double s : scores) ss += (s - report.mean) * (s - report.mean);
    report.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return report;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["code_version"] = kVersion;
  j["config"] = to_json(report.config);
  j["config_hash"] = config_hash(report.config);
  j["problem"] = to_json(report.problem);
  j["metric"] = report.metric;
  j["mean"] = report.mean;
  j["std_error"] = report.std_error;
  j["truncation_warning"] = report.truncation_warning;
  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json run_seconds = nlohmann::json::array();
  for (const auto& r : report.runs) {
    nlohmann::json jr;
    jr["run"] = r.run;
    jr["seed"] = r.seed;
    jr["value"] = r.value;
    jr["percent_of_optimal"] = r.percent ? nlohmann::json(*r.percent) : nlohmann::json(nullptr);
    jr["excluded_zero_optimal"] = r.excluded_zero_optimal;
    jr["path_hash"] = hex16(r.path_hash);
    jr["estimator_failed_at"] = r.estimator_failed_at ? nlohmann::json(*r.estimator_failed_at) : nlohmann::json(nullptr);
    jr["weights"] = r.weights;
    runs.push_back(std::move(jr));
    run_seconds.push_back(r.seconds);
  }
  j["runs"] = std::move(runs);
  j["timing"] = {{"build_seconds", report.build_seconds},
                 {"exact_seconds", report.exact_seconds},
                 {"run_seconds", std::move(run_seconds)}};
  return j;
}

std::string report_filename(const ExperimentConfig& config) {
  return "report-" + config.problem + "-" + to_string(config.method) + "-" + config_hash(config) + ".json";
}

std::filesystem::path write_report(const std::filesystem::path& out_dir, const EvaluationReport& report) {
  std::filesystem::create_directories(out_dir);
  const auto path = out_dir / report_filename(report.config);
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << to_json(report).dump(2) << '\n';
  return path;
}

nlohmann::json read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  try {
    nlohmann::json j = nlohmann::json::parse(is);
    if (j.value("schema_version", 0) != kReportSchemaVersion) throw ValidationError("unsupported report schema");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

SummaryTables summarize(const std::vector<nlohmann::json>& reports) {
  if (reports.empty()) throw ValidationError("need at least one report to summarize");
  struct Row {
    std::string problem, method, metric, hash;
    double scale, mean, std_error;
    int runs, m, n;
  };
  std::vector<Row> rows;
  try {
    for (const auto& j : reports) {
      const auto& c = j.at("config");
      rows.push_back({c.at("problem").get<std::string>(), c.at("method").get<std::string>(),
                      j.at("metric").get<std::string>(), j.at("config_hash").get<std::string>(),
                      c.at("scale").get<double>(), j.at("mean").get<double>(), j.at("std_error").get<double>(),
                      c.at("runs").get<int>(), c.at("m_iterations").get<int>(), c.at("n_samples").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
  auto key = [](const Row& r) {
    return std::tuple(problem_order(r.problem), static_cast<int>(parse_method(r.method)), r.m, r.n, r.hash);
  };
  std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) { return key(a) < key(b); });

  SummaryTables out;
  std::ostringstream summary, sweep;
  summary << "problem,method,scale,metric,runs,mean,std_error,config_hash\n";
  sweep << "problem,method,m_iterations,n_samples,runs,mean,std_error\n";
  out.summary_json = nlohmann::json::array();
  for (const auto& r : rows) {
    summary << r.problem << ',' << r.method << ',' << format_number(r.scale) << ',' << r.metric << ',' << r.runs << ','
            << format_number(r.mean) << ',' << format_number(r.std_error) << ',' << r.hash << '\n';
    if (is_api(parse_method(r.method))) {
      sweep << r.problem << ',' << r.method << ',' << r.m << ',' << r.n << ',' << r.runs << ','
            << format_number(r.mean) << ',' << format_number(r.std_error) << '\n';
    }
    out.summary_json.push_back({{"problem", r.problem},
                                {"method", r.method},
                                {"scale", r.scale},
                                {"metric", r.metric},
                                {"runs", r.runs},
                                {"m_iterations", r.m},
                                {"n_samples", r.n},
                                {"mean", r.mean},
                                {"std_error", r.std_error},
                                {"config_hash", r.hash}});
  }
  out.summary_csv = summary.str();
  out.sweep_csv = sweep.str();
  return out;
}

}  // namespace adp::bench
