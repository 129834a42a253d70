#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "adp/calibration.hpp"
#include "adp/errors.hpp"
#include "adp/storage.hpp"
#include "adp/storage_mdp.hpp"
#include "adp/timeseries_io.hpp"
#include "support.hpp"

using namespace adp;
using namespace adp::storage;

namespace {

StorageSpec c10_spec(double capacity = 1.0) {
  StorageSpec s;
  s.capacity = capacity;
  s.max_charge_fraction = 1.0 / 40.0;
  s.max_discharge_fraction = -1.0 / 40.0;
  s.eta_charge = 0.9;
  s.eta_discharge = 0.9;
  s.resource_floor = 0.2;
  return s;
}

StorageState random_state(Rng& rng, const StorageSpec& spec) {
  StorageState s;
  s.resource = spec.resource_floor + (1.0 - spec.resource_floor) * uniform01(rng);
  if (uniform01(rng) < 0.1) s.resource = uniform01(rng) < 0.5 ? spec.resource_floor : 1.0;
  s.wind_energy = uniform01(rng) < 0.3 ? 0.0 : 0.1 * uniform01(rng);
  s.demand = uniform01(rng) < 0.2 ? 0.0 : 0.1 * uniform01(rng);
  s.price = 100.0 * uniform01(rng) - 10.0;
  return s;
}

StorageSpec random_spec(Rng& rng) {
  StorageSpec s;
  s.capacity = 0.5 + 3.0 * uniform01(rng);
  s.max_charge_fraction = uniform01(rng) < 0.5 ? 1.0 / 40.0 : 0.25;
  s.max_discharge_fraction = -s.max_charge_fraction;
  s.eta_charge = 0.6 + 0.4 * uniform01(rng);
  s.eta_discharge = 0.6 + 0.4 * uniform01(rng);
  s.resource_floor = 0.3 * uniform01(rng);
  s.allow_sell_to_grid = uniform01(rng) < 0.7;
  return s;
}

double sample_variance(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

std::vector<double> simulate_ar1(Rng& rng, int n, double phi, double sd) {
  std::vector<double> y(static_cast<std::size_t>(n));
  double x = 0.0;
  for (auto& v : y) {
    x = phi * x + sd * standard_normal(rng);
    v = x;
  }
  return y;
}

std::vector<double> simulate_log_price(const PriceModel& m, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> y(static_cast<std::size_t>(n));
  double x = m.long_run_level;
  for (auto& v : y) {
    x = price_step(m, x, CalendarPosition{}, kStepYears, rng).deseasonalized;
    v = x;
  }
  return y;
}

std::filesystem::path scratch_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "adp_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("storage") {
  TEST_CASE("flow derivation examples") {
    const auto spec = c10_spec();
    StorageState s{0.5, 0.0, 0.02, 40.0, {}};
    auto f = derive_flows(s, 0.0, 0.0, spec);
    CHECK(f.grid_to_demand == doctest::Approx(0.02));
    CHECK(f.wind_to_demand == 0.0);
    CHECK(f.wind_to_storage == 0.0);
    CHECK(f.storage_to_demand == 0.0);

    s.wind_energy = 0.05;
    f = derive_flows(s, 0.0, 0.0, spec);
    CHECK(f.wind_to_demand == doctest::Approx(0.02));
    CHECK(f.wind_to_storage == doctest::Approx(0.03));

    StorageSpec big = c10_spec(40.0);  // rate cap 1 MWh per step
    StorageState t{0.5, 0.0, 1.0, 40.0, {}};
    f = derive_flows(t, 0.0, 1.0, big);
    CHECK(f.grid_to_demand == doctest::Approx(0.1));
  }

  TEST_CASE("infeasible flows name their constraint") {
    const auto spec = c10_spec();
    StorageState s{0.5, 0.0, 0.01, 40.0, {}};
    CHECK_THROWS_AS(derive_flows(s, 0.0, -0.001, spec), InfeasibleFlow);
    CHECK_THROWS_AS(derive_flows(s, 1.0, 0.0, spec), InfeasibleFlow);
    CHECK_THROWS_AS(derive_flows(s, 0.0, 0.02, spec), InfeasibleFlow);  // over-serves demand
    auto no_sell = spec;
    no_sell.allow_sell_to_grid = false;
    try {
      derive_flows(s, -0.01, 0.0, no_sell);
      FAIL("expected InfeasibleFlow");
    } catch (const InfeasibleFlow& e) {
      CHECK(e.constraint().find("selling") != std::string::npos);
    }
    StorageState empty{0.2, 0.0, 0.01, 40.0, {}};
    CHECK_THROWS_AS(derive_flows(empty, 0.0, 0.005, spec), InfeasibleFlow);
  }

  TEST_CASE("action box examples") {
    auto spec = c10_spec();
    spec.allow_sell_to_grid = false;
    StorageState floor_state{0.2, 0.0, 0.05, 30.0, {}};
    auto box = feasible_action_box(floor_state, spec);
    CHECK(box.discharge_max == 0.0);
    CHECK(box.grid_min == 0.0);
    CHECK(box.grid_max == doctest::Approx(1.0 / 36.0).epsilon(1e-12));

    StorageState full{1.0, 0.0, 0.0, 30.0, {}};
    box = feasible_action_box(full, c10_spec());
    CHECK(box.grid_max == doctest::Approx(0.0));
    CHECK(box.grid_min < 0.0);
  }

  TEST_CASE("storage transition examples") {
    StorageSpec spec = c10_spec(2.0);
    spec.max_charge_fraction = 0.5;
    StorageState s{0.5, 0.0, 0.0, 10.0, {}};
    FlowDecision zero;
    CHECK(storage_transition(s, zero, spec) == 0.5);
    FlowDecision f;
    f.grid_to_storage = 0.1;
    f.wind_to_storage = 0.1;
    CHECK(storage_transition(s, f, spec) == doctest::Approx(0.59).epsilon(1e-12));
    StorageState nearly_full{0.99, 0.0, 0.0, 10.0, {}};
    f.grid_to_storage = 0.5;
    CHECK(storage_transition(nearly_full, f, spec) == 1.0);
  }

  TEST_CASE("contribution examples") {
    StorageState s{0.5, 2.0, 2.0, 50.0, {}};
    FlowDecision f;
    CHECK(contribution(s, f) == doctest::Approx(100.0));
    StorageState sell{0.5, 0.0, 0.0, 30.0, {}};
    f.grid_to_storage = -1.0;
    CHECK(contribution(sell, f) == doctest::Approx(30.0));
    StorageState mixed{0.5, 0.0, 2.0, 50.0, {}};
    FlowDecision g;
    g.grid_to_demand = 1.5;
    g.grid_to_storage = 0.2;
    CHECK(contribution(mixed, g) == doctest::Approx(15.0));
  }

  TEST_CASE("wind power") {
    CHECK(wind_power(0.0, 900.0) == 0.0);
    const double area = std::numbers::pi * 2500.0;
    const double expected = 1e-8 / 36.0 * 0.5 * 0.45 * 1.225 * area * 1000.0 * 900.0;
    CHECK(std::abs(wind_power(10.0, 900.0) / expected - 1.0) < 1e-12);
    CHECK(std::abs(wind_power(14.0, 900.0) / wind_power(7.0, 900.0) - 8.0) < 1e-12);
  }

  TEST_CASE("fuzzed feasible actions conserve energy and respect bounds") {
    Rng rng(51);
    for (int rep = 0; rep < 2000; ++rep) {
      const auto spec = random_spec(rng);
      const auto s = random_state(rng, spec);
      const auto box = feasible_action_box(s, spec);
      for (const auto& [g, d] : action_lattice(box, 5, 5)) {
        FlowDecision f;
        REQUIRE_NOTHROW(f = derive_flows(s, g, d, spec));
        CHECK(std::abs(f.wind_to_demand + spec.eta_discharge * f.storage_to_demand + f.grid_to_demand - s.demand) <
              1e-9);
        CHECK(std::abs(f.wind_to_demand + f.wind_to_storage - s.wind_energy) < 1e-9);
        CHECK(f.grid_to_demand >= 0.0);
        CHECK(f.wind_to_storage >= 0.0);
        const double r = storage_transition(s, f, spec);
        CHECK(r >= spec.resource_floor - 1e-9);
        CHECK(r <= 1.0);
      }
    }
  }

  TEST_CASE("round trip loses the product of the efficiencies") {
    Rng rng(52);
    for (int rep = 0; rep < 50; ++rep) {
      auto spec = random_spec(rng);
      spec.resource_floor = 0.0;
      const double x = spec.max_charge_fraction * spec.capacity * uniform01(rng);
      StorageState s{0.5, 0.0, 0.0, 20.0, {}};
      const auto charge = derive_flows(s, x / spec.eta_charge, 0.0, spec);
      s.resource = storage_transition(s, charge, spec);
      s.demand = 1e3;
      // Everything stored comes back out to the load.
      const double stored = (s.resource - 0.5) * spec.capacity;
      const auto serve = derive_flows(s, 0.0, stored, spec);
      const double delivered = spec.eta_discharge * serve.storage_to_demand;
      CHECK(std::abs(delivered / (x / spec.eta_charge) - spec.round_trip_efficiency()) < 1e-9);
      CHECK(std::abs(storage_transition(s, serve, spec) - 0.5) < 1e-12);
    }
  }

  TEST_CASE("myopic decision drains a full device") {
    StorageEnvironment env;
    env.storage = c10_spec(2.5);
    env.models = default_models();
    ContinuousStorageMdp m(env, 11, 11);
    Rng rng(53);
    for (int rep = 0; rep < 50; ++rep) {
      auto pre = m.sample_start_state(rng);
      pre.coords[kResource] = 1.0;
      if (pre.coords[kPrice] <= 0.0) continue;
      const auto myopic = mdp::myopic_policy(mdp::BasisSpec{{kResource}, 1, {{0.2, 1.0}}}, 0.99);
      std::vector<mdp::Action> scratch;
      const auto d = mdp::greedy_decision(myopic, m, pre, scratch);
      double lowest = 1.0;
      for (const auto& a : mdp::feasible_actions(m, pre)) lowest = std::min(lowest, m.apply_action(pre, a).coords[kResource]);
      CHECK(d.post.coords[kResource] == doctest::Approx(lowest).epsilon(1e-12));
      // Wind surplus beyond the rate limit can keep a full device full whatever is drawn.
      if (lowest < 1.0) CHECK(d.post.coords[kResource] < 1.0);
    }
  }

  TEST_CASE("wind model") {
    WindModel still;
    still.noise_sd = 0.0;
    Rng rng(54);
    double y = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto w = wind_step(still, y, 900.0, rng);
      CHECK(w.speed == doctest::Approx(still.mean_sqrt_speed * still.mean_sqrt_speed));
      y = w.deviation;
    }

    const WindModel reference;
    std::vector<double> dev(1000000);
    y = 0.0;
    for (auto& v : dev) {
      y = wind_step(reference, y, 900.0, rng).deviation;
      v = y;
    }
    const double target = 0.4020 * 0.4020 / (1.0 - 0.7633 * 0.7633);
    CHECK(std::abs(sample_variance(dev) / target - 1.0) < 0.01);

    Rng a(7);
    Rng b(7);
    CHECK(wind_step(reference, 0.3, 900.0, a).energy == wind_step(reference, 0.3, 900.0, b).energy);
  }

  TEST_CASE("price model") {
    PriceModel calm;
    calm.volatility = 0.0;
    calm.jump_probability = 0.0;
    Rng rng(55);
    CHECK(price_step(calm, calm.long_run_level, {}, kStepYears, rng).deseasonalized ==
          doctest::Approx(calm.long_run_level));
    const double a = 1.0 - calm.mean_reversion * kStepYears;
    const double start = calm.long_run_level + 1.0;
    const auto next = price_step(calm, start, {}, kStepYears, rng);
    CHECK(next.deseasonalized - calm.long_run_level == doctest::Approx(a).epsilon(1e-12));

    const PriceModel reference;
    const auto path = simulate_log_price(reference, 1000000, 56);
    double mean = 0.0;
    for (double v : path) mean += v;
    mean /= static_cast<double>(path.size());
    // Standard error of an AR(1) mean: sd * sqrt((1 + a) / (1 - a) / n).
    const double sd = reference.stationary_sd();
    const double ap = 1.0 - reference.mean_reversion * kStepYears;
    const double se = sd * std::sqrt((1.0 + ap) / (1.0 - ap) / static_cast<double>(path.size()));
    CHECK(std::abs(mean - reference.long_run_level) < 3.0 * se);

    PriceModel unstable;
    unstable.mean_reversion = 2.5 / kStepYears;
    CHECK_THROWS_AS(price_step(unstable, 0.0, {}, kStepYears, rng), ParameterMismatch);
    CHECK_THROWS_AS(unstable.validate(), ParameterMismatch);
  }

  TEST_CASE("demand model") {
    DemandModel flat;
    flat.noise_variance = 0.0;
    Rng rng(57);
    CHECK(demand_step(flat, 0.0, {}, rng).demand == 0.0);

    const DemandModel reference;
    std::vector<double> resid(1000000);
    double d = 0.0;
    for (auto& v : resid) {
      d = demand_step(reference, d, {}, rng).deseasonalized;
      v = d;
    }
    const double target = 914870.0 / (1.0 - 0.9636 * 0.9636);
    CHECK(std::abs(sample_variance(resid) / target - 1.0) < 0.01);

    Rng a(3);
    Rng b(3);
    CHECK(demand_step(reference, 5.0, {}, a).demand == demand_step(reference, 5.0, {}, b).demand);
  }

  TEST_CASE("AR(1) fitting") {
    Rng rng(58);
    std::vector<double> noise(10000);
    for (auto& v : noise) v = standard_normal(rng);
    CHECK(std::abs(fit_ar1(noise).coefficient) < 3.0 / std::sqrt(10000.0));

    const auto series = simulate_ar1(rng, 100000, 0.7633, 0.4020);
    const auto fit = fit_ar1(series);
    CHECK(std::abs(fit.coefficient - 0.7633) < 0.01);
    CHECK(fit.noise_sd() == doctest::Approx(0.4020).epsilon(0.02));

    const std::vector<double> flat(100, 3.0);
    CHECK_THROWS_AS(fit_ar1(flat), DegenerateSeries);
  }

  TEST_CASE("jump-diffusion fitting") {
    PriceModel ou;
    ou.jump_probability = 0.0;
    const auto fit = fit_jump_diffusion(simulate_log_price(ou, 100000, 59));
    CHECK(fit.mean_reversion == doctest::Approx(ou.mean_reversion).epsilon(0.05));
    CHECK(fit.long_run_level == doctest::Approx(ou.long_run_level).epsilon(0.05));
    CHECK(fit.volatility == doctest::Approx(ou.volatility).epsilon(0.05));
    CHECK(fit.jump_probability <= 0.002);

    const PriceModel reference;
    const auto jumpy = fit_jump_diffusion(simulate_log_price(reference, 200000, 60));
    CHECK(std::abs(jumpy.jump_probability - 0.017) < 0.005);
    CHECK(jumpy.jump_sd == doctest::Approx(0.4229).epsilon(0.1));

    const std::vector<double> flat(500, 4.0);
    CHECK_THROWS_AS(fit_jump_diffusion(flat), DegenerateSeries);
  }

  TEST_CASE("seasonal fitting") {
    const std::int64_t n = 24 * 4 * 366;
    std::vector<CalendarPosition> cal(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) cal[static_cast<std::size_t>(t)] = calendar_at_step(t);

    std::vector<double> constant(static_cast<std::size_t>(n), 7.5);
    auto fit = fit_seasonals(constant, cal);
    for (double h : fit.hour_of_week) CHECK(h == doctest::Approx(7.5));
    for (double m : fit.month_of_year) CHECK(std::abs(m) < 1e-9);
    for (double r : fit.residual) CHECK(std::abs(r) < 1e-9);

    // Hour-of-week pattern plus month offsets; the fit must recover both bucket tables.
    std::array<double, kHoursPerWeek> hours{};
    std::array<double, kMonths> months{};
    Rng rng(61);
    for (auto& h : hours) h = 100.0 + 10.0 * standard_normal(rng);
    double mm = 0.0;
    for (auto& m : months) mm += (m = 5.0 * standard_normal(rng));
    for (auto& m : months) m -= mm / kMonths;
    std::vector<double> composite(static_cast<std::size_t>(n));
    for (std::int64_t t = 0; t < n; ++t) {
      const auto& c = cal[static_cast<std::size_t>(t)];
      composite[static_cast<std::size_t>(t)] = hours[static_cast<std::size_t>(c.hour_of_week)] +
                                               months[static_cast<std::size_t>(c.month)];
    }
    fit = fit_seasonals(composite, cal);
    for (int h = 0; h < kHoursPerWeek; ++h) CHECK(std::abs(fit.hour_of_week[h] - hours[h]) < 1e-9);
    for (int m = 0; m < kMonths; ++m) CHECK(std::abs(fit.month_of_year[m] - months[m]) < 1e-9);

    std::vector<CalendarPosition> short_cal(cal.begin(), cal.begin() + 1000);
    std::vector<double> short_values(1000, 1.0);
    CHECK_THROWS_AS(fit_seasonals(short_values, short_cal), EmptyBucket);
  }

  TEST_CASE("demand polynomial") {
    const std::array<double, 6> alpha{3.0, -1.0, 0.5, 0.02, -0.001, 1e-5};
    std::vector<double> temp(200);
    std::vector<double> load(200);
    for (int i = 0; i < 200; ++i) {
      temp[static_cast<std::size_t>(i)] = -10.0 + 0.2 * i;
      load[static_cast<std::size_t>(i)] = evaluate_polynomial(alpha, temp[static_cast<std::size_t>(i)]);
    }
    const auto fit = fit_demand_polynomial(load, temp);
    for (int j = 0; j < 6; ++j) CHECK(std::abs(fit[static_cast<std::size_t>(j)] - alpha[static_cast<std::size_t>(j)]) < 1e-8);

    // Noisy fit within three standard errors from the OLS covariance sigma^2 (X^T X)^-1.
    Rng rng(62);
    const int n = 100000;
    const double sigma = 2.0;
    std::vector<double> t2(n);
    std::vector<double> l2(n);
    Eigen::MatrixXd x(n, 6);
    for (int i = 0; i < n; ++i) {
      t2[static_cast<std::size_t>(i)] = -1.0 + 2.0 * uniform01(rng);
      l2[static_cast<std::size_t>(i)] = evaluate_polynomial(alpha, t2[static_cast<std::size_t>(i)]) + sigma * standard_normal(rng);
      for (int j = 0; j < 6; ++j) x(i, j) = std::pow(t2[static_cast<std::size_t>(i)], j);
    }
    const auto noisy = fit_demand_polynomial(l2, t2);
    const Eigen::MatrixXd cov = sigma * sigma * (x.transpose() * x).inverse();
    for (int j = 0; j < 6; ++j) {
      CHECK(std::abs(noisy[static_cast<std::size_t>(j)] - alpha[static_cast<std::size_t>(j)]) < 3.0 * std::sqrt(cov(j, j)));
    }

    const std::vector<double> same(50, 20.0);
    const std::vector<double> any(50, 1.0);
    CHECK_THROWS_AS(fit_demand_polynomial(any, same), RankDeficient);
  }

  TEST_CASE("synthetic data and CSV ingestion") {
    const auto dir = scratch_dir("synthetic");
    const auto models = default_models();
    write_dataset(dir / "empty", generate_synthetic_dataset(models, 0, 1));
    CHECK(slurp(dir / "empty" / "price.csv") == "timestamp,value\n");

    const auto data = generate_synthetic_dataset(models, 100000, 2);
    CHECK(std::abs(fit_ar1([&] {
                     std::vector<double> y;
                     for (double w : data.wind_speed.values) y.push_back(std::sqrt(w) - models.wind.mean_sqrt_speed);
                     return y;
                   }())
                       .coefficient -
                   0.7633) < 0.01);

    write_dataset(dir / "a", generate_synthetic_dataset(models, 500, 3));
    write_dataset(dir / "b", generate_synthetic_dataset(models, 500, 3));
    for (const char* f : {"price.csv", "load.csv", "wind.csv", "temperature.csv"}) {
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    const auto back = read_dataset(dir / "a");
    CHECK(back.price.size() == 500);

    std::istringstream gap("timestamp,value\n2010-01-01T00:00:00Z,1\n2010-01-01T00:45:00Z,2\n");
    try {
      read_time_series_csv(gap);
      FAIL("expected DataFormatError");
    } catch (const DataFormatError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream bad_header("time,value\n");
    CHECK_THROWS_AS(read_time_series_csv(bad_header), DataFormatError);
  }

  TEST_CASE("model documents round trip") {
    const auto dir = scratch_dir("models");
    auto models = default_models();
    models.price.jump_probability = 0.02;
    save_models(dir / "m.json", models);
    const auto back = load_models(dir / "m.json");
    CHECK(back.price.jump_probability == 0.02);
    CHECK(back.price.hour_of_week == models.price.hour_of_week);
    CHECK(back.demand.noise_variance == models.demand.noise_variance);
    auto doc = models_to_json(models);
    doc["schema_version"] = 99;
    CHECK_THROWS_AS(models_from_json(doc), ValidationError);
  }
}
