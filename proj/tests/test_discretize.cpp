#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "adp/bench.hpp"
#include "adp/discretize.hpp"
#include "adp/errors.hpp"

using namespace adp;
using namespace adp::exact;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::shared_ptr<const DiscreteStorageModel> small_problem() {
  static const auto built = [] {
    bench::BuildOptions opts;
    return bench::build_problem(bench::problem_definition("1", 1.0 / 3.0), storage::default_models(), opts);
  }();
  return built.discrete;
}

}  // namespace

TEST_SUITE("discretize") {
  TEST_CASE("level grid midpoints and nearest level") {
    const LevelGrid g{0.0, 1.0, 4};
    CHECK(g.level(0) == doctest::Approx(0.125));
    CHECK(g.level(3) == doctest::Approx(0.875));
    CHECK(g.nearest(0.3) == 1);
    CHECK(g.nearest(-5.0) == 0);
    CHECK(g.nearest(7.0) == 3);
    const LevelGrid single{-2.0, 2.0, 1};
    CHECK(single.level(0) == 0.0);
    CHECK(single.nearest(1.5) == 0);
  }

  TEST_CASE("deterministic step puts all mass on one level") {
    const LevelGrid g{0.0, 10.0, 10};
    const auto chain = estimate_level_transitions(g, [](double x, Rng&) { return x + 1.0; }, 500, 1, 0);
    for (int i = 0; i < 10; ++i) {
      const auto& row = chain.rows[static_cast<std::size_t>(i)];
      REQUIRE(row.size() == 1);
      CHECK(row[0].target == std::min(i + 1, 9));
      CHECK(row[0].probability == 1.0);
    }
    CHECK(chain.empty_rows.empty());
  }

  TEST_CASE("rows without finite samples fall back to a self-loop") {
    const LevelGrid g{0.0, 1.0, 3};
    const auto chain =
        estimate_level_transitions(g, [](double x, Rng&) { return x > 0.5 ? std::nan("") : x; }, 100, 2, 0);
    CHECK(chain.empty_rows == std::vector<int>{2});
    CHECK(chain.rows[2].size() == 1);
    CHECK(chain.rows[2][0].target == 2);
  }

  TEST_CASE("AR(1) chain matches Gaussian bin probabilities") {
    const double phi = 0.7633;
    const double sd = 0.4020;
    const double stationary = sd / std::sqrt(1.0 - phi * phi);
    const LevelGrid g{-3.0 * stationary, 3.0 * stationary, 10};
    const auto chain = estimate_level_transitions(
        g, [&](double x, Rng& rng) { return phi * x + sd * standard_normal(rng); }, 100000, 3, 0);
    const double width = (g.upper - g.lower) / g.count;
    for (int i = 0; i < g.count; ++i) {
      std::vector<double> est(static_cast<std::size_t>(g.count), 0.0);
      double total = 0.0;
      for (const auto& e : chain.rows[static_cast<std::size_t>(i)]) {
        est[static_cast<std::size_t>(e.target)] += e.probability;
        total += e.probability;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      const double mean = phi * g.level(i);
      double tv = 0.0;
      for (int j = 0; j < g.count; ++j) {
        const double lo = j == 0 ? -INFINITY : g.lower + j * width;
        const double hi = j == g.count - 1 ? INFINITY : g.lower + (j + 1) * width;
        const double p = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
        tv += std::abs(p - est[static_cast<std::size_t>(j)]);
      }
      CHECK(0.5 * tv <= 0.02);
    }
  }

  TEST_CASE("resource rounding preserves the mean") {
    const auto model = small_problem();
    Rng rng(5);
    const double floor = model->resource_levels.front();
    for (int rep = 0; rep < 1000; ++rep) {
      const double r = floor + (1.0 - floor) * uniform01(rng);
      const auto split = model->resource_rounding(r);
      double mean = 0.0;
      double total = 0.0;
      for (const auto& e : split) {
        CHECK(e.probability > 0.0);
        mean += e.probability * model->resource_levels[static_cast<std::size_t>(e.target)];
        total += e.probability;
      }
      CHECK(total == doctest::Approx(1.0));
      CHECK(std::abs(mean - r) < 1e-6);
      CHECK(split.size() <= 2);
    }
    for (std::size_t i = 0; i < model->resource_levels.size(); ++i) {
      const auto on = model->resource_rounding(model->resource_levels[i]);
      REQUIRE(on.size() == 1);
      CHECK(on[0].target == static_cast<int>(i));
    }
  }

  TEST_CASE("scaled problem is a well-formed finite MDP") {
    const auto model = small_problem();
    const auto& mdp = model->mdp;
    const auto& lv = model->levels;
    CHECK(mdp.endogenous_count() == lv.resource);
    CHECK(mdp.exogenous_count() == lv.time * lv.price * lv.demand * lv.wind);
    CHECK(mdp.state_count() == 231);
    CHECK_NOTHROW(mdp.validate());
    const double floor = model->resource_levels.front();
    CHECK(floor == doctest::Approx(model->environment.storage.resource_floor));
    CHECK(model->resource_levels.back() == doctest::Approx(1.0));
    for (double r : model->action_post_resource) {
      CHECK(r >= floor - 1e-9);
      CHECK(r <= 1.0 + 1e-12);
    }
    for (int s = 0; s < mdp.state_count(); ++s) CHECK(mdp.action_count(s) >= 1);
    CHECK(model->coordinates().rows() == mdp.state_count());
    CHECK(model->coordinate_names().size() == static_cast<std::size_t>(model->coordinates().cols()));
  }

  TEST_CASE("discretization is deterministic in its seed") {
    bench::BuildOptions opts;
    const auto problem = bench::problem_definition("1", 1.0 / 3.0);
    const auto a = bench::build_problem(problem, storage::default_models(), opts);
    const auto b = bench::build_problem(problem, storage::default_models(), opts);
    opts.seed += 1;
    const auto c = bench::build_problem(problem, storage::default_models(), opts);
    bool same = true;
    bool differs = false;
    for (int e = 0; e < a.discrete->mdp.exogenous_count(); ++e) {
      const auto ra = a.discrete->mdp.exogenous_row(e);
      const auto rb = b.discrete->mdp.exogenous_row(e);
      const auto rc = c.discrete->mdp.exogenous_row(e);
      same &= std::equal(ra.begin(), ra.end(), rb.begin(), rb.end(), [](const auto& x, const auto& y) {
        return x.target == y.target && x.probability == y.probability;
      });
      differs |= !std::equal(ra.begin(), ra.end(), rc.begin(), rc.end(), [](const auto& x, const auto& y) {
        return x.target == y.target && x.probability == y.probability;
      });
    }
    CHECK(same);
    CHECK(differs);
  }

  TEST_CASE("simulator sampling follows the transition rows") {
    const auto model = small_problem();
    const DiscreteStorageMdp sim(model);
    Rng rng(6);
    for (int rep = 0; rep < 5; ++rep) {
      const auto pre = sim.sample_start_state(rng);
      const int s = static_cast<int>(pre.index);
      std::vector<mdp::Action> actions;
      sim.feasible_actions(pre, actions);
      const auto& action = actions[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(actions.size())))];
      mdp::PostState post;
      CHECK(sim.evaluate_action(pre, action, post) == model->mdp.contribution(s, action.index));

      std::map<int, double> expected;
      for (const auto& e : model->mdp.transition_row(s, action.index)) expected[e.target] += e.probability;
      const int draws = 40000;
      std::map<int, int> seen;
      for (int i = 0; i < draws; ++i) ++seen[static_cast<int>(sim.exogenous_step(post, rng).index)];
      for (const auto& [target, count] : seen) CHECK(expected.count(target) == 1);
      for (const auto& [target, p] : expected) {
        const double freq = static_cast<double>(seen[target]) / draws;
        CHECK(std::abs(freq - p) < 5.0 * std::sqrt(p * (1.0 - p) / draws) + 1e-12);
      }
    }
  }

  TEST_CASE("invalid levels are rejected") {
    DiscretizationLevels lv;
    lv.resource = 1;
    CHECK_THROWS_AS(lv.validate(), ValidationError);
    lv = {};
    lv.price = 0;
    CHECK_THROWS_AS(lv.validate(), ValidationError);
    CHECK_THROWS_AS(estimate_level_transitions(LevelGrid{0, 1, 2}, [](double x, Rng&) { return x; }, 0, 1, 0),
                    ValidationError);
  }
}
