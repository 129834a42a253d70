#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "adp/bench.hpp"
#include "adp/errors.hpp"

using namespace adp;
using namespace adp::bench;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig quick_config(Method method) {
  ExperimentConfig c;
  c.problem = "1";
  c.scale = 1.0 / 3.0;
  c.method = method;
  c.seed = 5;
  c.runs = 2;
  c.m_iterations = 2;
  c.n_samples = 300;
  c.evaluation_paths = 20;
  c.horizon = 300;
  c.search.budget = 8;
  c.search.restarts = 2;
  c.search.paths_per_observation = 2;
  c.search.horizon = 100;
  return c;
}

struct Fixture {
  BuiltProblem built;
  exact::ExactSolution exact;
};

const Fixture& quick_problem() {
  static const Fixture f = [] {
    Fixture out;
    out.built = build_problem(quick_config(Method::Exact));
    out.exact = solve_exact(out.built);
    return out;
  }();
  return f;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("problem table") {
    const auto ids = problem_ids();
    CHECK(ids.size() == 30);
    CHECK(ids.front() == "1");
    CHECK(ids.back() == "C10");

    const auto p1 = problem_definition("1");
    CHECK(p1.kind == storage::ProblemKind::Full);
    CHECK(p1.wind_ratio == doctest::Approx(0.1));
    CHECK(p1.storage_ratio == doctest::Approx(2.5));
    CHECK(p1.round_trip_efficiency == doctest::Approx(0.81));
    CHECK(p1.charge_rate == ChargeRate::C10);
    CHECK(p1.levels.resource == 33);
    CHECK(p1.levels.price == 20);
    CHECK(p1.levels.wind == 10);
    CHECK_FALSE(p1.continuous);

    const auto p17 = problem_definition("17");
    CHECK(p17.kind == storage::ProblemKind::BatteryArbitrage);
    CHECK(p17.levels.time == 96);
    CHECK(p17.time_dependent);

    CHECK(problem_definition("C1").continuous);
    CHECK_THROWS_AS(problem_definition("21"), UnknownProblem);
    CHECK_THROWS_AS(problem_definition("C11"), UnknownProblem);
    CHECK_THROWS_AS(problem_definition("1", 0.0), ValidationError);
  }

  TEST_CASE("scaling rounds level counts but keeps time") {
    const auto p1 = problem_definition("1", 1.0 / 3.0);
    CHECK(p1.levels.resource == 11);
    CHECK(p1.levels.price == 7);
    CHECK(p1.levels.wind == 3);
    CHECK(p1.scaled);
    const auto p17 = problem_definition("17", 1.0 / 3.0);
    CHECK(p17.levels.time == 96);
    const auto tiny = problem_definition("1", 0.01);
    CHECK(tiny.levels.resource >= 2);
    CHECK(tiny.levels.price >= 1);
  }

  TEST_CASE("percent of optimal") {
    auto r = percent_of_optimal({1.0, 2.0}, {2.0, 4.0});
    CHECK(r.mean == doctest::Approx(0.5));
    CHECK(r.used == 2);
    r = percent_of_optimal({-3.0}, {-2.0});
    CHECK(r.mean == doctest::Approx(1.5));
    r = percent_of_optimal({5.0, 1.0}, {0.0, 2.0});
    CHECK(r.mean == doctest::Approx(0.5));
    CHECK(r.used == 1);
    CHECK(r.excluded_zero_optimal == 1);
    CHECK(std::isnan(percent_of_optimal({1.0}, {0.0}).mean));
    CHECK_THROWS_AS(percent_of_optimal({1.0}, {1.0, 2.0}), DimensionMismatch);
  }

  TEST_CASE("config documents round trip and reject junk") {
    auto c = quick_config(Method::LSProjected);
    c.models_path = "models.json";
    const auto j = to_json(c);
    const auto back = config_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(config_hash(back) == config_hash(c));
    CHECK(config_hash(c).size() == 16);
    auto other = c;
    other.seed += 1;
    CHECK(config_hash(other) != config_hash(c));

    auto bad = j;
    bad["colour"] = "blue";
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);
    bad = j;
    bad["schema_version"] = 2;
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);
    bad = j;
    bad["estimator"] = "IV";
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);
    bad = j;
    bad["runs"] = "many";
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);
    CHECK_THROWS_AS(config_from_json(nlohmann::json::array()), ValidationError);
    CHECK(config_from_json(nlohmann::json{{"problem", 9}}).problem == "9");
    CHECK_THROWS_AS(parse_method("simplex"), ValidationError);
  }

  TEST_CASE("exact scores one and myopic scores less") {
    const auto& f = quick_problem();
    const auto exact = run_experiment(quick_config(Method::Exact), f.built, &f.exact);
    CHECK(exact.metric == "percent_of_optimal");
    for (const auto& r : exact.runs) CHECK(*r.percent == 1.0);
    CHECK(exact.mean == 1.0);

    // Per-path ratios are noisy; enough long paths separate myopic from optimal.
    auto c = quick_config(Method::Myopic);
    c.seed = 0;
    c.runs = 6;
    c.evaluation_paths = 200;
    c.horizon = 1000;
    const auto myopic = run_experiment(c, f.built, &f.exact);
    CHECK(myopic.runs.size() == 6);
    CHECK(myopic.mean + 3.0 * myopic.std_error < 1.0);
    CHECK(myopic.runs[1].seed == myopic.runs[0].seed + 1);
  }

  TEST_CASE("methods share evaluation paths and repeat exactly") {
    const auto& f = quick_problem();
    const auto a = run_experiment(quick_config(Method::IVAPI), f.built, &f.exact);
    const auto b = run_experiment(quick_config(Method::IVAPI), f.built, &f.exact);
    auto ja = to_json(a);
    auto jb = to_json(b);
    ja.erase("timing");
    jb.erase("timing");
    CHECK(ja.dump() == jb.dump());
    const auto ls = run_experiment(quick_config(Method::LSAPI), f.built, &f.exact);
    CHECK(ls.runs[0].path_hash == a.runs[0].path_hash);
    CHECK(a.runs[0].weights.size() == static_cast<std::size_t>(f.built.basis.feature_count()));
  }

  TEST_CASE("direct policy search runs on a discrete problem") {
    const auto& f = quick_problem();
    const auto dps = run_experiment(quick_config(Method::DirectPolicySearch), f.built, &f.exact);
    CHECK(dps.runs.size() == 2);
    for (const auto& r : dps.runs) {
      CHECK(r.percent.has_value());
      CHECK(std::isfinite(*r.percent));
    }
  }

  TEST_CASE("discrete problems need a matching exact solution") {
    const auto& f = quick_problem();
    CHECK_THROWS_AS(run_experiment(quick_config(Method::Myopic), f.built, nullptr), MissingExactSolution);
    auto wrong = f.exact;
    wrong.problem_key = "something else";
    CHECK_THROWS_AS(run_experiment(quick_config(Method::Myopic), f.built, &wrong), ParameterMismatch);
    auto c = quick_config(Method::Myopic);
    c.problem = "2";
    CHECK_THROWS_AS(run_experiment(c, f.built, &f.exact), ValidationError);
  }

  TEST_CASE("exact solutions cache by discretization") {
    const auto& f = quick_problem();
    const auto dir = std::filesystem::temp_directory_path() / "adp_tests" / "exact_cache";
    std::filesystem::remove_all(dir);
    CHECK_FALSE(load_exact(dir, f.built).has_value());
    store_exact(dir, f.built, f.exact);
    const auto back = load_exact(dir, f.built);
    REQUIRE(back.has_value());
    CHECK(back->value.values == f.exact.value.values);
    CHECK(back->policy == f.exact.policy);
  }

  TEST_CASE("continuous problems report raw values") {
    auto c = quick_config(Method::Myopic);
    c.problem = "C10";
    c.scale = 1.0;
    c.evaluation_paths = 5;
    c.horizon = 50;
    const auto built = build_problem(c);
    CHECK(built.discrete == nullptr);
    CHECK_THROWS_AS(solve_exact(built), ValidationError);
    const auto report = run_experiment(c, built, nullptr);
    CHECK(report.metric == "raw_value");
    for (const auto& r : report.runs) CHECK_FALSE(r.percent.has_value());
  }

  TEST_CASE("reports are written and read back") {
    const auto& f = quick_problem();
    const auto report = run_experiment(quick_config(Method::Myopic), f.built, &f.exact);
    const auto dir = std::filesystem::temp_directory_path() / "adp_tests" / "reports";
    std::filesystem::remove_all(dir);
    const auto path = write_report(dir, report);
    CHECK(path.filename().string() == report_filename(report.config));
    const auto j = read_report(path);
    for (const char* key : {"schema_version", "code_version", "config", "config_hash", "problem", "metric", "mean",
                            "std_error", "truncation_warning", "runs", "timing"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["mean"].get<double>() == report.mean);
    std::ofstream(dir / "broken.json") << "{";
    CHECK_THROWS_AS(read_report(dir / "broken.json"), ValidationError);
  }

  TEST_CASE("summary tables match the golden files") {
    const auto golden = std::filesystem::path(ADP_GOLDEN_DIR);
    const auto reports = nlohmann::json::parse(slurp(golden / "reports.json"));
    std::vector<nlohmann::json> list(reports.begin(), reports.end());
    const auto tables = summarize(list);
    CHECK(tables.summary_csv == slurp(golden / "summary.csv"));
    CHECK(tables.sweep_csv == slurp(golden / "sweep.csv"));
    CHECK(tables.summary_json.size() == 5);

    CHECK_THROWS_AS(summarize({}), ValidationError);
    CHECK_THROWS_AS(summarize({nlohmann::json{{"config", {{"problem", "1"}}}}}), ValidationError);
  }
}
