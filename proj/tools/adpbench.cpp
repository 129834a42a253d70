// Command-line front end: data generation, model fitting, problem building, exact solves,
// experiments and report tables.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adp/bench.hpp"
#include "adp/errors.hpp"
#include "adp/timeseries_io.hpp"
#include "adp/version.hpp"

namespace fs = std::filesystem;
using namespace adp;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct ProblemFlags {
  std::string problem = "1";
  double scale = 1.0 / 3.0;
  double gamma = 0.99;
  int mc_samples = 10000;
  std::uint64_t discretization_seed = 20240101;
  int action_levels = 11;
  std::string models;

  void add(CLI::App* app) {
    app->add_option("--problem", problem, "Problem id: 1-20 or C1-C10")->required();
    app->add_option("--scale", scale, "Discretization scale factor in (0, 1]")->capture_default_str();
    app->add_option("--gamma", gamma, "Discount factor")->capture_default_str();
    app->add_option("--mc-samples", mc_samples, "Monte-Carlo samples per transition row")->capture_default_str();
    app->add_option("--discretization-seed", discretization_seed, "Seed for transition estimation")
        ->capture_default_str();
    app->add_option("--action-levels", action_levels, "Lattice points per action dimension")->capture_default_str();
    app->add_option("--models", models, "Model JSON from fit-models (default: built-in models)");
  }

  bench::ExperimentConfig config() const {
    bench::ExperimentConfig c;
    c.problem = problem;
    c.scale = scale;
    c.discount = gamma;
    c.mc_samples = mc_samples;
    c.discretization_seed = discretization_seed;
    c.grid_levels = c.discharge_levels = action_levels;
    c.models_path = models;
    c.method = bench::Method::Myopic;
    return c;
  }
};

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate dynamic programming benchmark for energy storage"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Simulate synthetic price, load, wind and temperature series");
  std::string gen_out;
  std::int64_t gen_steps = 35040;
  std::uint64_t gen_seed = 0;
  std::string gen_models;
  gen->add_option("--out-dir", gen_out, "Directory for the CSV files")->required();
  gen->add_option("--steps", gen_steps, "Number of 15-minute steps")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Random seed")->capture_default_str();
  gen->add_option("--models", gen_models, "Model JSON (default: built-in models)");

  // fit-models
  auto* fit = app.add_subcommand("fit-models", "Fit wind, price and load models to CSV series");
  std::string fit_data, fit_out;
  std::optional<double> fit_shift;
  fit->add_option("--data-dir", fit_data, "Directory holding price.csv, load.csv, wind.csv, temperature.csv")
      ->required();
  fit->add_option("--out", fit_out, "Output model JSON")->required();
  fit->add_option("--price-shift", fit_shift, "Shift added to prices before taking logs");

  // build
  auto* build = app.add_subcommand("build", "Assemble a benchmark problem and describe it");
  ProblemFlags build_flags;
  std::string build_out = "out";
  build_flags.add(build);
  build->add_option("--out-dir", build_out, "Output directory")->capture_default_str();

  // solve-exact
  auto* solve = app.add_subcommand("solve-exact", "Solve a discrete problem by value iteration");
  ProblemFlags solve_flags;
  std::string solve_cache = "out/exact";
  double solve_epsilon = 1e-6;
  bool solve_csv = false;
  solve_flags.add(solve);
  solve->add_option("--exact-cache", solve_cache, "Directory for exact solutions")->capture_default_str();
  solve->add_option("--epsilon", solve_epsilon, "Value iteration tolerance")->capture_default_str();
  solve->add_flag("--csv", solve_csv, "Also write a CSV dump of values and actions");

  // run
  auto* run = app.add_subcommand("run", "Run one method on one problem and write its report");
  std::string run_config, run_method = "ivapi", run_out = "out", run_cache, run_estimator;
  ProblemFlags run_flags;
  std::uint64_t run_seed = 0;
  int run_runs = 20, run_m = 10, run_n = 2000, run_paths = 100, run_horizon = 2000, run_degree = 2;
  bool solve_missing = false;
  run->add_option("--config", run_config, "Experiment config JSON; other flags are then ignored");
  run->add_option("--problem", run_flags.problem, "Problem id: 1-20 or C1-C10");
  run->add_option("--scale", run_flags.scale, "Discretization scale factor")->capture_default_str();
  run->add_option("--method", run_method,
                  "exact, myopic, lsapi, ivapi, ls-projected, iv-projected or dps")
      ->capture_default_str();
  run->add_option("--estimator", run_estimator, "ls, iv, ls-projected or iv-projected (selects the API method)");
  run->add_option("--seed", run_seed, "Base seed; run r uses seed + r")->capture_default_str();
  run->add_option("--runs", run_runs, "Independent runs")->capture_default_str();
  run->add_option("--gamma", run_flags.gamma, "Discount factor")->capture_default_str();
  run->add_option("--m-iters", run_m, "Policy improvement loops")->capture_default_str();
  run->add_option("--n-samples", run_n, "Bellman samples per loop")->capture_default_str();
  run->add_option("--paths", run_paths, "Evaluation paths per run")->capture_default_str();
  run->add_option("--horizon", run_horizon, "Evaluation horizon in steps")->capture_default_str();
  run->add_option("--basis-degree", run_degree, "Polynomial degree of the value basis")->capture_default_str();
  run->add_option("--mc-samples", run_flags.mc_samples, "Monte-Carlo samples per transition row")
      ->capture_default_str();
  run->add_option("--action-levels", run_flags.action_levels, "Lattice points per action dimension")
      ->capture_default_str();
  run->add_option("--models", run_flags.models, "Model JSON (default: built-in models)");
  run->add_option("--out-dir", run_out, "Output directory")->capture_default_str();
  run->add_option("--exact-cache", run_cache, "Directory of exact solutions (default: <out-dir>/exact)");
  run->add_flag("--solve-missing", solve_missing, "Solve and cache the exact problem when it is not cached");

  // report
  auto* rep = app.add_subcommand("report", "Summarize report JSON files into tables");
  std::vector<std::string> rep_inputs;
  std::string rep_out = "out";
  rep->add_option("reports", rep_inputs, "Report JSON files or directories")->required();
  rep->add_option("--out-dir", rep_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto models = gen_models.empty() ? storage::default_models() : storage::load_models(gen_models);
      const auto data = storage::generate_synthetic_dataset(models, gen_steps, gen_seed);
      fs::create_directories(gen_out);
      storage::write_dataset(gen_out, data);
      std::cout << "wrote " << gen_steps << " steps to " << gen_out << "\n";
    } else if (fit->parsed()) {
      storage::ModelFitOptions opts;
      opts.price_shift = fit_shift;
      const auto report = storage::fit_models(storage::read_dataset(fit_data), opts);
      storage::save_models(fit_out, report.models);
      std::cout << "wind AR coefficient " << report.wind_fit.coefficient << "\n"
                << "price mean reversion " << report.price_fit.mean_reversion << ", jump probability "
                << report.price_fit.jump_probability << ", jump sd " << report.price_fit.jump_sd << "\n"
                << "load AR coefficient " << report.demand_fit.coefficient << "\n"
                << "wrote " << fit_out << "\n";
    } else if (build->parsed()) {
      const auto config = build_flags.config();
      const auto t0 = std::chrono::steady_clock::now();
      const auto built = bench::build_problem(config);
      nlohmann::json j;
      j["problem"] = bench::to_json(built.problem);
      j["basis_features"] = built.basis.feature_count();
      if (built.discrete) {
        j["states"] = built.discrete->mdp.state_count();
        j["actions"] = built.discrete->mdp.total_actions();
        j["empty_rows"] = built.discrete->empty_rows;
        j["exact_key"] = built.exact_key;
      }
      j["build_seconds"] = elapsed(t0);
      fs::create_directories(build_out);
      const fs::path path = fs::path(build_out) / ("problem-" + built.problem.id + ".json");
      write_text(path, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
    } else if (solve->parsed()) {
      const auto built = bench::build_problem(solve_flags.config());
      const auto t0 = std::chrono::steady_clock::now();
      const auto solution = bench::solve_exact(built, solve_epsilon);
      const auto path = bench::store_exact(solve_cache, built, solution);
      if (solve_csv) {
        auto csv = path;
        csv.replace_extension(".csv");
        exact::write_solution_csv(csv, solution);
      }
      std::cout << "value iteration: " << solution.value.iterations << " sweeps, residual " << solution.value.residual
                << ", " << elapsed(t0) << " s\nwrote " << path.string() << "\n";
    } else if (run->parsed()) {
      bench::ExperimentConfig config;
      if (!run_config.empty()) {
        config = bench::load_config(run_config);
      } else {
        config = run_flags.config();
        config.method = bench::parse_method(run_method);
        if (!run_estimator.empty()) {
          switch (est::parse_estimator(run_estimator)) {
            case est::EstimatorKind::LeastSquares: config.method = bench::Method::LSAPI; break;
            case est::EstimatorKind::InstrumentalVariables: config.method = bench::Method::IVAPI; break;
            case est::EstimatorKind::LeastSquaresProjected: config.method = bench::Method::LSProjected; break;
            case est::EstimatorKind::InstrumentalVariablesProjected: config.method = bench::Method::IVProjected; break;
          }
        }
        config.seed = run_seed;
        config.runs = run_runs;
        config.m_iterations = run_m;
        config.n_samples = run_n;
        config.evaluation_paths = run_paths;
        config.horizon = run_horizon;
        config.basis_degree = run_degree;
        config.validate();
      }
      const fs::path cache = run_cache.empty() ? fs::path(run_out) / "exact" : fs::path(run_cache);
      auto t0 = std::chrono::steady_clock::now();
      const auto built = bench::build_problem(config);
      const double build_seconds = elapsed(t0);
      std::optional<exact::ExactSolution> solution;
      double exact_seconds = 0.0;
      if (built.discrete) {
        solution = bench::load_exact(cache, built);
        if (!solution && solve_missing) {
          t0 = std::chrono::steady_clock::now();
          solution = bench::solve_exact(built);
          exact_seconds = elapsed(t0);
          bench::store_exact(cache, built, *solution);
        }
      }
      auto report = bench::run_experiment(config, built, solution ? &*solution : nullptr);
      report.build_seconds = build_seconds;
      report.exact_seconds = exact_seconds;
      const auto path = bench::write_report(run_out, report);
      std::cout << bench::to_string(config.method) << " on problem " << config.problem << ": " << report.metric << " "
                << report.mean << " +/- " << report.std_error << "\nwrote " << path.string() << "\n";
    } else if (rep->parsed()) {
      std::vector<fs::path> files;
      for (const auto& in : rep_inputs) {
        if (fs::is_directory(in)) {
          for (const auto& e : fs::directory_iterator(in)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() == ".json" && name.rfind("report-", 0) == 0) files.push_back(e.path());
          }
        } else {
          files.emplace_back(in);
        }
      }
      std::sort(files.begin(), files.end());
      std::vector<nlohmann::json> reports;
      for (const auto& f : files) reports.push_back(bench::read_report(f));
      const auto tables = bench::summarize(reports);
      fs::create_directories(rep_out);
      write_text(fs::path(rep_out) / "summary.csv", tables.summary_csv);
      write_text(fs::path(rep_out) / "sweep.csv", tables.sweep_csv);
      write_text(fs::path(rep_out) / "summary.json", tables.summary_json.dump(2) + "\n");
      std::cout << tables.summary_csv;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
