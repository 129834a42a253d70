#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "adp/estimators.hpp"
#include "adp/exact.hpp"
#include "adp/random.hpp"

namespace adp::testing {

inline Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = sd * standard_normal(rng);
  return m;
}

inline Eigen::VectorXd gaussian_vector(Rng& rng, Eigen::Index n, double sd = 1.0) {
  return gaussian_matrix(rng, n, 1, sd).col(0);
}

inline int uniform_int(Rng& rng, int lo, int hi) { return lo + uniform_index(rng, hi - lo + 1); }

// Bellman samples whose next-state features are a noisy linear image of the current ones,
// with a constant first column like a real basis.
inline est::EstimatorInputs random_bellman_inputs(Rng& rng, int n, int k, double discount, double next_noise = 0.3) {
  est::EstimatorInputs in;
  in.discount = discount;
  in.phi_prev = gaussian_matrix(rng, n, k);
  in.phi_prev.col(0).setOnes();
  const Eigen::MatrixXd mix = Eigen::MatrixXd::Identity(k, k) * 0.5 + gaussian_matrix(rng, k, k, 0.2);
  in.phi_next = in.phi_prev * mix + gaussian_matrix(rng, n, k, next_noise);
  in.phi_next.col(0).setOnes();
  in.contributions = gaussian_vector(rng, n) + in.phi_prev * gaussian_vector(rng, k);
  return in;
}

inline double relative_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-300});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Errors-in-variables data: latent X, observed X' = X + noise, Y' = X beta + noise, and an
// instrument built from an independent second measurement of X.
struct EivSample {
  Eigen::MatrixXd latent_x;
  Eigen::MatrixXd observed_x;
  Eigen::VectorXd observed_y;
  Eigen::MatrixXd instruments;
};

inline EivSample errors_in_variables(Rng& rng, int n, const Eigen::VectorXd& beta, double x_noise = 0.5,
                                     double y_noise = 0.1, double instrument_noise = 0.5) {
  const Eigen::Index k = beta.size();
  EivSample s;
  s.latent_x = gaussian_matrix(rng, n, k);
  s.observed_x = s.latent_x + gaussian_matrix(rng, n, k, x_noise);
  s.observed_y = s.latent_x * beta + gaussian_vector(rng, n, y_noise);
  s.instruments = s.latent_x + gaussian_matrix(rng, n, k, instrument_noise);
  return s;
}

// Dense random MDP with `actions` actions per state and `fanout` successors per action.
inline exact::DiscreteMdp random_mdp(Rng& rng, int states, int actions, double discount, int fanout = 4,
                                     double reward_lo = -1.0, double reward_hi = 1.0) {
  auto b = exact::DiscreteMdp::Builder::flat(states, discount);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      std::vector<exact::TransitionEntry> row;
      double total = 0.0;
      for (int f = 0; f < fanout; ++f) {
        const double w = 0.05 + uniform01(rng);
        row.push_back({uniform_index(rng, states), w});
        total += w;
      }
      for (auto& e : row) e.probability /= total;
      b.add_action(s, reward_lo + (reward_hi - reward_lo) * uniform01(rng), row);
    }
  }
  return b.build();
}

// Howard policy iteration with exact evaluation; an oracle independent of value iteration.
inline exact::PolicyTable policy_iteration(const exact::DiscreteMdp& mdp, Eigen::VectorXd& values) {
  exact::PolicyTable policy(static_cast<std::size_t>(mdp.state_count()), 0);
  for (int round = 0; round < 1000; ++round) {
    values = exact::exact_policy_value(mdp, policy);
    bool changed = false;
    for (int s = 0; s < mdp.state_count(); ++s) {
      auto q = [&](int a) {
        double v = mdp.contribution(s, a);
        for (const auto& t : mdp.transition_row(s, a)) v += mdp.discount() * t.probability * values[t.target];
        return v;
      };
      int best = policy[static_cast<std::size_t>(s)];
      double best_q = q(best);
      for (int a = 0; a < mdp.action_count(s); ++a) {
        const double qa = q(a);
        if (qa > best_q + 1e-12) {
          best = a;
          best_q = qa;
        }
      }
      if (best != policy[static_cast<std::size_t>(s)]) {
        policy[static_cast<std::size_t>(s)] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return policy;
}

}  // namespace adp::testing
