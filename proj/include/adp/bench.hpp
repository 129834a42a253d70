#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adp/discretize.hpp"
#include "adp/exact.hpp"
#include "adp/mdp.hpp"
#include "adp/policy_search.hpp"
#include "adp/storage_mdp.hpp"

namespace adp::bench {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kHourlyLoad = 1.0;  // MWh per hour; storage ratios are relative to it

enum class ChargeRate { C1, C10 };

struct BenchmarkProblem {
  std::string id;  // "1".."20" or "C1".."C10"
  storage::ProblemKind kind = storage::ProblemKind::Full;
  exact::DiscretizationLevels levels;  // only time is meaningful for continuous problems
  double wind_ratio = 0.0;
  double storage_ratio = 2.5;
  double round_trip_efficiency = 0.81;
  ChargeRate charge_rate = ChargeRate::C10;
  bool continuous = false;
  bool time_dependent = false;
  double scale = 1.0;
  bool scaled = false;

  void validate() const;
};

std::vector<std::string> problem_ids();
// Throws UnknownProblem. Scaling rounds every discretization count except time to the
// nearest integer, keeping at least one level (two for the resource).
BenchmarkProblem problem_definition(const std::string& id, double scale = 1.0);
storage::StorageEnvironment make_environment(const BenchmarkProblem& problem, const storage::StochasticModels& models);
nlohmann::json to_json(const BenchmarkProblem& problem);

enum class Method { Exact, Myopic, LSAPI, IVAPI, LSProjected, IVProjected, DirectPolicySearch };

std::string to_string(Method m);
Method parse_method(const std::string& name);  // throws ValidationError
bool is_api(Method m);
est::EstimatorKind estimator_for(Method m);

struct SearchSettings {
  int budget = 50;
  int restarts = 5;
  int paths_per_observation = 4;
  int horizon = 1000;
};

struct ExperimentConfig {
  std::string problem = "1";
  double scale = 1.0 / 3.0;
  Method method = Method::IVAPI;
  std::uint64_t seed = 0;  // run r uses seed + r
  int runs = 20;
  double discount = 0.99;
  int m_iterations = 10;
  int n_samples = 2000;
  int evaluation_paths = 100;
  int horizon = 2000;
  int basis_degree = 2;
  int mc_samples = 10000;
  std::uint64_t discretization_seed = 20240101;
  int grid_levels = 11;
  int discharge_levels = 11;
  SearchSettings search;
  std::string models_path;  // empty: built-in models

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);  // throws ValidationError
ExperimentConfig load_config(const std::filesystem::path& path);
// FNV-1a of the canonical (sorted-key) JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct BuildOptions {
  double discount = 0.99;
  int mc_samples = 10000;
  std::uint64_t seed = 20240101;
  exact::ActionLatticeSize lattice;             // discrete problems
  exact::ActionLatticeSize continuous{21, 21};  // continuous problems
  int basis_degree = 2;
};

BuildOptions build_options(const ExperimentConfig& config);

struct BuiltProblem {
  BenchmarkProblem problem;
  storage::StorageEnvironment environment;
  std::shared_ptr<const exact::DiscreteStorageModel> discrete;  // null for continuous problems
  std::shared_ptr<const mdp::MdpInterface> simulator;
  std::function<mdp::PreState(Rng&)> sample_start_state;
  mdp::BasisSpec basis;         // approximate policy iteration features
  mdp::BasisSpec search_basis;  // resource-only quadratic tuned by direct policy search
  search::SearchBox search_box;
  double discount = 0.99;
  double contribution_bound = 0.0;  // largest |contribution|; NaN when unknown
  std::string exact_key;            // identifies the discretization an exact solution belongs to
};

BuiltProblem build_problem(const BenchmarkProblem& problem, const storage::StochasticModels& models,
                           const BuildOptions& options);
BuiltProblem build_problem(const ExperimentConfig& config);

// Value iteration on a discrete problem, packaged for storage. Throws ValidationError when
// the problem is continuous.
exact::ExactSolution solve_exact(const BuiltProblem& built, double epsilon = 1e-6);
std::filesystem::path exact_cache_path(const std::filesystem::path& dir, const BuiltProblem& built);
// Returns nullopt when no solution is cached; ParameterMismatch when the cached file belongs
// to a different discretization.
std::optional<exact::ExactSolution> load_exact(const std::filesystem::path& dir, const BuiltProblem& built);
std::filesystem::path store_exact(const std::filesystem::path& dir, const BuiltProblem& built,
                                  const exact::ExactSolution& solution);

struct PercentOfOptimal {
  double mean = 0.0;
  int used = 0;
  int excluded_zero_optimal = 0;
};

// Mean of per-path ratios; paths whose optimal value is zero are skipped and counted.
PercentOfOptimal percent_of_optimal(const std::vector<double>& policy_values, const std::vector<double>& optimal_values);

struct RunRecord {
  int run = 0;
  std::uint64_t seed = 0;
  double value = 0.0;              // mean discounted return over the evaluation paths
  std::optional<double> percent;   // percent of optimal, discrete problems only
  int excluded_zero_optimal = 0;
  std::uint64_t path_hash = 0;
  std::optional<int> estimator_failed_at;
  std::vector<double> weights;
  double seconds = 0.0;
};

struct EvaluationReport {
  ExperimentConfig config;
  BenchmarkProblem problem;
  std::string metric;  // "percent_of_optimal" or "raw_value"
  std::vector<RunRecord> runs;
  double mean = 0.0;
  double std_error = 0.0;
  bool truncation_warning = false;
  double build_seconds = 0.0;
  double exact_seconds = 0.0;
};

// Runs the configured method for every run and evaluates it on paired paths. Discrete
// problems need `exact` (MissingExactSolution otherwise); Exact itself scores 1.
EvaluationReport run_experiment(const ExperimentConfig& config, const BuiltProblem& built,
                                const exact::ExactSolution* exact);

// Content fields only; wall-clock values live under "timing".
nlohmann::json to_json(const EvaluationReport& report);
std::string report_filename(const ExperimentConfig& config);
std::filesystem::path write_report(const std::filesystem::path& out_dir, const EvaluationReport& report);
nlohmann::json read_report(const std::filesystem::path& path);

struct SummaryTables {
  std::string summary_csv;
  std::string sweep_csv;
  nlohmann::json summary_json;
};

// Per-problem, per-method mean and standard error, plus the M/N sensitivity table for the
// approximate policy iteration methods. Rows are sorted by problem, method, M, N.
SummaryTables summarize(const std::vector<nlohmann::json>& reports);

}  // namespace adp::bench
