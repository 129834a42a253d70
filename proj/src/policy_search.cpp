#include "adp/policy_search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adp/errors.hpp"

namespace adp::search {

namespace {

constexpr double kJitter = 1e-8;            // relative to the signal variance
constexpr double kMaxJitter = 1e-4;
constexpr double kInformationFloor = 100.0;  // posterior variance below this many jitters carries no information
constexpr double kCompassTolerance = 1e-6;   // final step as a fraction of the box width
constexpr int kCompassEvaluations = 400;
constexpr int kScreenPerRestart = 20;         // screening points per local search

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// E[(Z - c)^+] evaluated at -|c|; always >= 0.
double tail_gain(double z) { return std::max(0.0, z * normal_cdf(z) + normal_pdf(z)); }

Eigen::MatrixXd kernel_matrix(const KernelParams& params, const std::vector<Eigen::VectorXd>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = k(j, i) = kernel(params, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
    }
  }
  return k;
}

bool factor_ok(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto d = llt.matrixLLT().diagonal();
  return d.allFinite() && (d.array() > 0.0).all();
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void SearchBox::validate() const {
  if (lower.size() != upper.size()) throw DimensionMismatch("search box bounds differ in length");
  if (lower.size() < 1 || lower.size() > kMaxSearchDims) throw ValidationError("search box must have 1 to 3 dimensions");
  if (!lower.allFinite() || !upper.allFinite() || !((upper - lower).array() > 0.0).all()) {
    throw ValidationError("search box needs finite bounds with upper > lower");
  }
}

bool SearchBox::contains(const Eigen::VectorXd& theta, double tol) const {
  return theta.size() == lower.size() && ((theta - lower).array() >= -tol).all() &&
         ((upper - theta).array() >= -tol).all();
}

Eigen::VectorXd SearchBox::clamp(const Eigen::VectorXd& theta) const { return theta.cwiseMax(lower).cwiseMin(upper); }

double kernel(const KernelParams& params, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double r2 = ((a - b).array() / params.length_scales.array()).square().sum();
  return params.signal_variance * std::exp(-0.5 * r2);
}

void GpModel::validate() const {
  box.validate();
  if (points.size() != observations.size()) throw DimensionMismatch("one observation per point");
  if (kernel.length_scales.size() != box.lower.size()) throw DimensionMismatch("one length scale per dimension");
  if (!(kernel.signal_variance > 0.0) || !(kernel.length_scales.array() > 0.0).all() ||
      !(kernel.noise_variance >= 0.0) || !std::isfinite(kernel.prior_mean)) {
    throw ValidationError("kernel hyperparameters must be positive");
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != box.lower.size()) throw DimensionMismatch("point dimension differs from the box");
    if (!std::isfinite(observations[i])) throw ValidationError("observations must be finite");
  }
}

GpPosterior::GpPosterior(GpModel model) : model_(std::move(model)) {
  model_.validate();
  const double sv = model_.kernel.signal_variance;
  jitter_ = kJitter * sv;
  if (model_.points.empty()) return;
  const Eigen::MatrixXd k = kernel_matrix(model_.kernel, model_.points);
  const auto n = k.rows();
  for (double rel = kJitter; rel <= kMaxJitter * 1.0000001; rel *= 100.0) {
    jitter_ = rel * sv;
    Eigen::MatrixXd a = k;
    a.diagonal().array() += model_.kernel.noise_variance + jitter_;
    chol_.compute(a);
    if (factor_ok(chol_)) {
      alpha_ = chol_.solve(to_vector(model_.observations) - Eigen::VectorXd::Constant(n, model_.kernel.prior_mean));
      observed_means_ = Eigen::VectorXd::Constant(n, model_.kernel.prior_mean) + k * alpha_;
      observed_solved_ = chol_.matrixL().solve(k);
      return;
    }
  }
  throw IllConditionedKernel("kernel matrix is not positive definite even with jitter");
}

Eigen::VectorXd GpPosterior::cross(const Eigen::VectorXd& x) const {
  if (x.size() != model_.box.lower.size()) throw DimensionMismatch("query dimension differs from the box");
  Eigen::VectorXd k(static_cast<Eigen::Index>(model_.points.size()));
  for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = kernel(model_.kernel, model_.points[static_cast<std::size_t>(i)], x);
  return k;
}

double GpPosterior::mean(const Eigen::VectorXd& x) const {
  if (model_.points.empty()) return model_.kernel.prior_mean;
  return model_.kernel.prior_mean + cross(x).dot(alpha_);
}

double GpPosterior::covariance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  const double prior = kernel(model_.kernel, a, b);
  if (model_.points.empty()) return prior;
  const Eigen::VectorXd va = chol_.matrixL().solve(cross(a));
  const Eigen::VectorXd vb = chol_.matrixL().solve(cross(b));
  return prior - va.dot(vb);
}

double GpPosterior::variance(const Eigen::VectorXd& x) const { return std::max(0.0, covariance(x, x)); }

Eigen::VectorXd GpPosterior::observed_covariance(const Eigen::VectorXd& x, double& variance_at_x) const {
  const double prior = model_.kernel.signal_variance;
  if (model_.points.empty()) {
    variance_at_x = prior;
    return {};
  }
  const Eigen::VectorXd k = cross(x);
  const Eigen::VectorXd v = chol_.matrixL().solve(k);
  variance_at_x = std::max(0.0, prior - v.squaredNorm());
  return k - observed_solved_.transpose() * v;
}

PosteriorMoments GpPosterior::predict(const std::vector<Eigen::VectorXd>& queries) const {
  const auto m = static_cast<Eigen::Index>(queries.size());
  const auto n = static_cast<Eigen::Index>(model_.points.size());
  PosteriorMoments out;
  out.mean.resize(m);
  Eigen::MatrixXd v(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::VectorXd k = cross(queries[static_cast<std::size_t>(j)]);
    out.mean(j) = model_.kernel.prior_mean + (n > 0 ? k.dot(alpha_) : 0.0);
    if (n > 0) v.col(j) = chol_.matrixL().solve(k);
  }
  out.covariance = kernel_matrix(model_.kernel, queries);
  if (n > 0) out.covariance -= v.transpose() * v;
  return out;
}

PosteriorMoments gp_posterior(const GpModel& model, const std::vector<Eigen::VectorXd>& queries) {
  return GpPosterior(model).predict(queries);
}

double expected_max_improvement(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("intercepts and slopes differ in length");
  if (a.empty()) return 0.0;
  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return b[i] < b[j] || (b[i] == b[j] && a[i] < a[j]);
  });
  // Upper envelope of the lines a + b z, slopes increasing; breaks[k] separates lines k and k + 1.
  std::vector<std::size_t> hull;
  std::vector<double> breaks;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t i = order[pos];
    if (pos + 1 < order.size() && b[order[pos + 1]] == b[i]) continue;  // dominated by an equal slope
    while (!hull.empty()) {
      const std::size_t j = hull.back();
      const double c = (a[j] - a[i]) / (b[i] - b[j]);
      if (!breaks.empty() && c <= breaks.back()) {
        hull.pop_back();
        breaks.pop_back();
        continue;
      }
      breaks.push_back(c);
      break;
    }
    hull.push_back(i);
  }
  double gain = 0.0;
  for (std::size_t k = 0; k < breaks.size(); ++k) {
    gain += (b[hull[k + 1]] - b[hull[k]]) * tail_gain(-std::abs(breaks[k]));
  }
  return gain;
}

double kgcp(const GpPosterior& posterior, const Eigen::VectorXd& candidate) {
  const GpModel& model = posterior.model();
  double var = 0.0;
  const Eigen::VectorXd cov = posterior.observed_covariance(candidate, var);
  if (var <= kInformationFloor * posterior.jitter()) return 0.0;
  const double scale = std::sqrt(var + model.kernel.noise_variance);
  const std::size_t n = model.points.size();
  std::vector<double> a(n + 1), b(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = posterior.observed_means()(static_cast<Eigen::Index>(i));
    b[i] = cov(static_cast<Eigen::Index>(i)) / scale;
  }
  a[n] = posterior.mean(candidate);
  b[n] = var / scale;
  return expected_max_improvement(std::move(a), std::move(b));
}

double kgcp(const GpModel& model, const Eigen::VectorXd& candidate) { return kgcp(GpPosterior(model), candidate); }

std::vector<Eigen::VectorXd> latin_hypercube(const SearchBox& box, int count, Rng& rng) {
  box.validate();
  if (count < 1) throw ValidationError("Latin hypercube needs at least one point");
  const int d = box.dims();
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(count), Eigen::VectorXd(d));
  std::vector<int> perm(static_cast<std::size_t>(count));
  for (int dim = 0; dim < d; ++dim) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = count - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(uniform_index(rng, i + 1))]);
    for (int i = 0; i < count; ++i) {
      const double u = (perm[static_cast<std::size_t>(i)] + uniform01(rng)) / count;
      out[static_cast<std::size_t>(i)](dim) = box.lower(dim) + u * (box.upper(dim) - box.lower(dim));
    }
  }
  return out;
}

namespace {

std::pair<Eigen::VectorXd, double> compass_search(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const SearchBox& box, Eigen::VectorXd x) {
  x = box.clamp(x);
  double fx = f(x);
  Eigen::VectorXd step = 0.25 * box.width();
  int evaluations = 1;
  while (evaluations < kCompassEvaluations && (step.array() / box.width().array()).maxCoeff() > kCompassTolerance) {
    bool improved = false;
    for (int dim = 0; dim < x.size() && !improved; ++dim) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd y = x;
        y(dim) += sign * step(dim);
        y = box.clamp(y);
        if (y == x) continue;
        const double fy = f(y);
        ++evaluations;
        if (fy > fx) {
          x = std::move(y);
          fx = fy;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return {x, fx};
}

}  // namespace

MaximizeResult maximize_in_box(const std::function<double(const Eigen::VectorXd&)>& f, const SearchBox& box,
                               int restarts, Rng& rng, const std::vector<Eigen::VectorXd>& extra_seeds) {
  box.validate();
  if (restarts < 1) throw ValidationError("need at least one restart");
  std::vector<Eigen::VectorXd> seeds = latin_hypercube(box, restarts, rng);
  seeds.insert(seeds.end(), extra_seeds.begin(), extra_seeds.end());
  MaximizeResult best;
  for (const auto& seed : seeds) {
    auto [x, fx] = compass_search(f, box, seed);
    best.restart_values.push_back(fx);
    if (fx > best.value || best.theta.size() == 0) {
      best.theta = std::move(x);
      best.value = fx;
    }
  }
  return best;
}

MaximizeResult maximize_kgcp(const GpPosterior& posterior, int restarts, Rng& rng) {
  // The knowledge gradient is flat away from a few narrow peaks, so local searches start from
  // the best points of a cheap screening pool as well as from fresh Latin-hypercube seeds.
  const auto f = [&](const Eigen::VectorXd& x) { return kgcp(posterior, x); };
  const SearchBox& box = posterior.model().box;
  if (restarts < 1) throw ValidationError("need at least one restart");
  auto pool = latin_hypercube(box, kScreenPerRestart * restarts, rng);
  std::vector<std::pair<double, std::size_t>> scored(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) scored[i] = {f(pool[i]), i};
  const auto keep = static_cast<std::ptrdiff_t>(std::min(scored.size(), static_cast<std::size_t>(restarts)));
  std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), std::greater<>());
  std::vector<Eigen::VectorXd> seeds;
  for (std::ptrdiff_t i = 0; i < keep; ++i) seeds.push_back(pool[scored[static_cast<std::size_t>(i)].second]);
  return maximize_in_box(f, box, restarts, rng, seeds);
}

double log_marginal_likelihood(const std::vector<Eigen::VectorXd>& points, const std::vector<double>& observations,
                               const KernelParams& params) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k = kernel_matrix(params, points);
  k.diagonal().array() += params.noise_variance + kJitter * params.signal_variance;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (!factor_ok(llt)) throw IllConditionedKernel("kernel matrix is not positive definite");
  const Eigen::VectorXd r = to_vector(observations) - Eigen::VectorXd::Constant(n, params.prior_mean);
  const Eigen::VectorXd alpha = llt.solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * r.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                            const Eigen::VectorXd& step, int max_evaluations, double tolerance) {
  const auto d = x0.size();
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(d + 1), x0);
  for (Eigen::Index i = 0; i < d; ++i) simplex[static_cast<std::size_t>(i + 1)](i) += step(i);
  std::vector<double> values(simplex.size());
  int evaluations = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t i = 0; i < simplex.size(); ++i) values[i] = eval(simplex[i]);
  std::vector<std::size_t> order(simplex.size());
  while (evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::abs(values[worst] - values[best]) <= tolerance * (std::abs(values[best]) + tolerance)) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += simplex[order[i]];
    centroid /= static_cast<double>(d);
    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = eval(reflected);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = eval(contracted);
      if (fc < std::min(fr, values[worst])) {
        simplex[worst] = contracted;
        values[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + 0.5 * (simplex[i] - simplex[best]);
          values[i] = eval(simplex[i]);
        }
      }
    }
  }
  const auto it = std::min_element(values.begin(), values.end());
  return simplex[static_cast<std::size_t>(it - values.begin())];
}

KernelParams fit_hyperparameters(const std::vector<Eigen::VectorXd>& points, const std::vector<double>& observations,
                                 const SearchBox& box, const HyperparameterOptions& options) {
  box.validate();
  if (points.size() != observations.size() || points.empty()) {
    throw ValidationError("hyperparameter fit needs matching, non-empty points and observations");
  }
  const int d = box.dims();
  const Eigen::VectorXd y = to_vector(observations);
  const double mean = y.mean();
  double var = (y.array() - mean).square().sum() / std::max<Eigen::Index>(1, y.size() - 1);
  if (!(var > 0.0)) var = std::max(1.0, mean * mean);
  const bool fit_noise = !options.noise_variance.has_value();

  // Log-space bounds relative to the data scale and the box.
  const int p = 1 + d + (fit_noise ? 1 : 0);
  Eigen::VectorXd lo(p), hi(p), x0(p);
  lo(0) = std::log(1e-6 * var);
  hi(0) = std::log(1e3 * var);
  x0(0) = std::log(var);
  for (int i = 0; i < d; ++i) {
    lo(1 + i) = std::log(0.02 * box.width()(i));
    hi(1 + i) = std::log(5.0 * box.width()(i));
    x0(1 + i) = std::log(0.3 * box.width()(i));
  }
  if (fit_noise) {
    lo(p - 1) = std::log(1e-8 * var);
    hi(p - 1) = std::log(var);
    x0(p - 1) = std::log(1e-2 * var);
  }
  auto unpack = [&](const Eigen::VectorXd& u) {
    const Eigen::VectorXd c = u.cwiseMax(lo).cwiseMin(hi);
    KernelParams k;
    k.signal_variance = std::exp(c(0));
    k.length_scales = c.segment(1, d).array().exp();
    k.noise_variance = fit_noise ? std::exp(c(p - 1)) : *options.noise_variance;
    k.prior_mean = mean;
    return k;
  };
  auto objective = [&](const Eigen::VectorXd& u) {
    try {
      return -log_marginal_likelihood(points, observations, unpack(u));
    } catch (const IllConditionedKernel&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const Eigen::VectorXd best = nelder_mead(objective, x0, Eigen::VectorXd::Constant(p, 1.0), options.max_evaluations);
  return unpack(best);
}

void SearchConfig::validate(int dims) const {
  if (budget < initial_design(dims)) throw ValidationError("search budget must cover the initial design of 2(d+1) points");
  if (restarts < 1) throw ValidationError("need at least one restart");
  if (refit_every < 1) throw ValidationError("refit interval must be positive");
}

SearchOutcome direct_policy_search(const Objective& objective, const SearchBox& box, const SearchConfig& config) {
  box.validate();
  config.validate(box.dims());
  Rng rng = make_stream(config.seed, Stream::Search, 0);
  SearchOutcome out;
  std::vector<Eigen::VectorXd> points;
  std::vector<double> values;
  std::vector<double> variances;

  auto observe = [&](const Eigen::VectorXd& theta, double kg) {
    const int n = static_cast<int>(points.size());
    Observation o;
    try {
      o = objective(theta, n);
    } catch (const NumericalError& e) {
      throw ObjectiveFailed(std::string("objective failed: ") + e.what(), theta);
    }
    if (!std::isfinite(o.mean)) throw ObjectiveFailed("objective returned a non-finite value", theta);
    points.push_back(theta);
    values.push_back(o.mean);
    variances.push_back(o.variance);
    out.history.push_back({n, theta, o.mean, kg});
  };
  auto fit = [&] {
    HyperparameterOptions opts;
    if (std::all_of(variances.begin(), variances.end(), [](double v) { return std::isfinite(v) && v >= 0.0; })) {
      opts.noise_variance = std::accumulate(variances.begin(), variances.end(), 0.0) / static_cast<double>(variances.size());
    }
    return fit_hyperparameters(points, values, box, opts);
  };

  for (const auto& theta : latin_hypercube(box, config.initial_design(box.dims()), rng)) {
    observe(theta, std::numeric_limits<double>::quiet_NaN());
  }
  KernelParams params = fit();
  int since_fit = 0;
  while (static_cast<int>(points.size()) < config.budget) {
    if (since_fit >= config.refit_every) {
      params = fit();
      since_fit = 0;
    }
    const GpPosterior posterior(GpModel{points, values, params, box});
    const MaximizeResult next = maximize_kgcp(posterior, config.restarts, rng);
    observe(next.theta, next.value);
    ++since_fit;
  }
  if (since_fit > 0) params = fit();

  const GpPosterior posterior(GpModel{points, values, params, box});
  const MaximizeResult decision =
      maximize_in_box([&](const Eigen::VectorXd& x) { return posterior.mean(x); }, box, config.restarts, rng, points);
  out.theta = decision.theta;
  out.posterior_mean = decision.value;
  out.kernel = params;
  return out;
}

void write_history_csv(const std::filesystem::path& path, const SearchOutcome& outcome) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os.precision(17);
  const Eigen::Index d = outcome.history.empty() ? outcome.theta.size() : outcome.history.front().theta.size();
  os << "iteration";
  for (Eigen::Index i = 0; i < d; ++i) os << ",theta_" << i;
  os << ",observation,kgcp\n";
  for (const auto& h : outcome.history) {
    os << h.iteration;
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << h.theta(i);
    os << ',' << h.observation << ',';
    if (std::isfinite(h.kgcp)) os << h.kgcp;
    os << '\n';
  }
}

}  // namespace adp::search
