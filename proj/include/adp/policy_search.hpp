#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "adp/random.hpp"

namespace adp::search {

inline constexpr int kMaxSearchDims = 3;

struct SearchBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dims() const { return static_cast<int>(lower.size()); }
  void validate() const;
  bool contains(const Eigen::VectorXd& theta, double tol = 0.0) const;
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  Eigen::VectorXd width() const { return upper - lower; }
  Eigen::VectorXd clamp(const Eigen::VectorXd& theta) const;
};

// Squared-exponential kernel with one length scale per dimension, constant prior mean.
struct KernelParams {
  double signal_variance = 1.0;
  Eigen::VectorXd length_scales;
  double noise_variance = 0.0;
  double prior_mean = 0.0;
};

double kernel(const KernelParams& params, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct GpModel {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> observations;
  KernelParams kernel;
  SearchBox box;

  void validate() const;
};

struct PosteriorMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Factorizes the kernel matrix once (diagonal jitter 1e-8 * signal variance, escalated by
// factors of 100 up to 1e-4 before giving up with IllConditionedKernel).
class GpPosterior {
 public:
  explicit GpPosterior(GpModel model);

  const GpModel& model() const { return model_; }
  double jitter() const { return jitter_; }
  double mean(const Eigen::VectorXd& x) const;
  double variance(const Eigen::VectorXd& x) const;
  double covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  PosteriorMoments predict(const std::vector<Eigen::VectorXd>& queries) const;
  // Posterior means at the observed points.
  const Eigen::VectorXd& observed_means() const { return observed_means_; }
  // Posterior covariances between each observed point and x; also returns the variance at x.
  Eigen::VectorXd observed_covariance(const Eigen::VectorXd& x, double& variance_at_x) const;

 private:
  Eigen::VectorXd cross(const Eigen::VectorXd& x) const;

  GpModel model_;
  double jitter_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;  // (K + noise I)^-1 (y - prior mean)
  Eigen::VectorXd observed_means_;
  Eigen::MatrixXd observed_solved_;  // L^-1 K
};

PosteriorMoments gp_posterior(const GpModel& model, const std::vector<Eigen::VectorXd>& queries);

// E[max_i a_i + b_i Z] - max_i a_i for Z standard normal; exact and never negative.
double expected_max_improvement(std::vector<double> a, std::vector<double> b);

// Expected gain in the maximum of the posterior mean over {observed points, candidate} from
// one more observation at the candidate. Zero when the candidate's posterior variance is at
// the numerical floor set by the jitter.
double kgcp(const GpPosterior& posterior, const Eigen::VectorXd& candidate);
double kgcp(const GpModel& model, const Eigen::VectorXd& candidate);

// Latin-hypercube sample of `count` points in the box.
std::vector<Eigen::VectorXd> latin_hypercube(const SearchBox& box, int count, Rng& rng);

struct MaximizeResult {
  Eigen::VectorXd theta;
  double value = -std::numeric_limits<double>::infinity();
  std::vector<double> restart_values;  // best value reached from each restart
};

// Multi-start compass search from Latin-hypercube seeds. Extra seeds, when given, are
// searched from too.
MaximizeResult maximize_in_box(const std::function<double(const Eigen::VectorXd&)>& f, const SearchBox& box,
                               int restarts, Rng& rng, const std::vector<Eigen::VectorXd>& extra_seeds = {});
MaximizeResult maximize_kgcp(const GpPosterior& posterior, int restarts, Rng& rng);

struct HyperparameterOptions {
  std::optional<double> noise_variance;  // held fixed when known
  int max_evaluations = 400;
};

// Maximum marginal likelihood by Nelder-Mead over log parameters; the prior mean is the
// sample mean of the observations.
KernelParams fit_hyperparameters(const std::vector<Eigen::VectorXd>& points, const std::vector<double>& observations,
                                 const SearchBox& box, const HyperparameterOptions& options = {});
double log_marginal_likelihood(const std::vector<Eigen::VectorXd>& points, const std::vector<double>& observations,
                               const KernelParams& params);

// Minimizes f from x0 with initial simplex steps `step`.
Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& step, int max_evaluations, double tolerance = 1e-8);

struct Observation {
  double mean = 0.0;
  // Variance of `mean`; NaN when it cannot be estimated (single path).
  double variance = std::numeric_limits<double>::quiet_NaN();
};

// Objective simulator: theta and the zero-based evaluation number.
using Objective = std::function<Observation(const Eigen::VectorXd&, int)>;

struct SearchConfig {
  int budget = 50;
  int restarts = 10;
  int refit_every = 10;
  std::uint64_t seed = 0;

  int initial_design(int dims) const { return 2 * (dims + 1); }
  void validate(int dims) const;
};

struct HistoryEntry {
  int iteration = 0;
  Eigen::VectorXd theta;
  double observation = 0.0;
  double kgcp = std::numeric_limits<double>::quiet_NaN();  // NaN for initial design points
};

struct SearchOutcome {
  Eigen::VectorXd theta;
  double posterior_mean = 0.0;
  KernelParams kernel;
  std::vector<HistoryEntry> history;
};

// Initial Latin-hypercube design, then sequential KGCP sampling until the budget is spent.
// The decision maximizes the final posterior mean over the box.
SearchOutcome direct_policy_search(const Objective& objective, const SearchBox& box, const SearchConfig& config);

void write_history_csv(const std::filesystem::path& path, const SearchOutcome& outcome);

}  // namespace adp::search
