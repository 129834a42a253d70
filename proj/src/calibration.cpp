#include "adp/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "adp/errors.hpp"

namespace adp::storage {

double Ar1Fit::noise_sd() const { return std::sqrt(noise_variance); }

Ar1Fit fit_ar1(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 3) throw DegenerateSeries("AR(1) fit needs at least three observations");
  Ar1Fit fit;
  for (double x : series) {
    if (!std::isfinite(x)) throw DegenerateSeries("series contains non-finite values");
    fit.mean += x;
  }
  fit.mean /= static_cast<double>(n);
  double c0 = 0.0;
  double c1 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double d = series[t] - fit.mean;
    c0 += d * d;
    if (t + 1 < n) c1 += d * (series[t + 1] - fit.mean);
  }
  c0 /= static_cast<double>(n);
  // Rounding in the mean leaves a constant series with a variance of order (eps * mean)^2.
  const double floor = 1e-12 * std::abs(fit.mean);
  if (!(c0 > 0.0) || c0 <= floor * floor) throw DegenerateSeries("series has zero variance");
  c1 /= static_cast<double>(n);
  fit.coefficient = c1 / c0;
  fit.noise_variance = (1.0 - fit.coefficient * fit.coefficient) * c0;
  return fit;
}

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Mass and second moment of N(0, w) beyond +-threshold.
double tail_mass(double w, double threshold) { return std::erfc(threshold / std::sqrt(2.0 * w)); }

double tail_second_moment(double w, double threshold) {
  const double c = threshold / std::sqrt(w);
  return w * (tail_mass(w, threshold) + 2.0 * c * normal_pdf(c));
}

struct MixtureSolution {
  double diffusion_variance;
  double jump_rate;
  double jump_variance;
};

// Per-step jump rate p, jump variance v and diffusion variance s2 such that a mixture
// (1-p) N(0, s2) + p N(0, s2 + v) matches the flagged fraction, the flagged second
// moment and the overall second moment.
MixtureSolution solve_truncated_mixture(double flagged_fraction, double flagged_moment, double total_moment,
                                        double threshold) {
  // Start from the unflagged moment; the total one already contains the jumps and would make
  // the diffusion tail alone explain every flag.
  const double unflagged = std::max((total_moment - flagged_fraction * flagged_moment) / (1.0 - flagged_fraction),
                                    1e-6 * total_moment);
  MixtureSolution sol{unflagged, flagged_fraction, std::max(flagged_moment - unflagged, unflagged)};
  for (int iter = 0; iter < 1000; ++iter) {
    const MixtureSolution prev = sol;
    const double base_mass = tail_mass(sol.diffusion_variance, threshold);
    const double jump_mass = tail_mass(sol.diffusion_variance + sol.jump_variance, threshold);
    if (jump_mass - base_mass <= 1e-300) {
      sol.jump_rate = 0.0;
    } else {
      sol.jump_rate = std::clamp((flagged_fraction - base_mass) / (jump_mass - base_mass), 0.0, 1.0);
    }
    if (sol.jump_rate <= 0.0) {
      return {total_moment, 0.0, 0.0};
    }
    const double base_part = (1.0 - sol.jump_rate) * tail_second_moment(sol.diffusion_variance, threshold);
    const double target = flagged_fraction * flagged_moment;
    auto excess = [&](double v) {
      return base_part + sol.jump_rate * tail_second_moment(sol.diffusion_variance + v, threshold) - target;
    };
    if (excess(0.0) >= 0.0) {
      sol.jump_variance = 0.0;
    } else {
      double lo = 0.0;
      double hi = std::max(flagged_moment, 1e-12);
      while (excess(hi) < 0.0 && hi < 1e12 * std::max(flagged_moment, 1e-12)) hi *= 2.0;
      for (int b = 0; b < 200 && hi - lo > 1e-15 * hi; ++b) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) < 0.0 ? lo : hi) = mid;
      }
      sol.jump_variance = 0.5 * (lo + hi);
    }
    sol.diffusion_variance = std::max(total_moment - sol.jump_rate * sol.jump_variance, 1e-6 * total_moment);
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-13 * std::max(std::abs(a), 1e-300); };
    if (close(sol.jump_rate, prev.jump_rate) && close(sol.jump_variance, prev.jump_variance) &&
        close(sol.diffusion_variance, prev.diffusion_variance)) {
      break;
    }
  }
  return sol;
}

struct LineFit {
  double intercept;
  double slope;
};

LineFit ols_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<char>& skip) {
  double sx = 0.0;
  double sy = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip[i]) continue;
    sx += x[i];
    sy += y[i];
    n += 1.0;
  }
  if (n < 3.0) throw DegenerateSeries("too few unflagged returns to fit the diffusion");
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (skip[i]) continue;
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateSeries("log price never moves; cannot fit mean reversion");
  const double slope = sxy / sxx;
  return {my - slope * mx, slope};
}

}  // namespace

JumpDiffusionFit fit_jump_diffusion(std::span<const double> log_prices, double step_years, const JumpFitOptions& opts) {
  if (!(step_years > 0.0)) throw ValidationError("step length must be positive");
  if (!(opts.threshold_sd > 0.0)) throw ValidationError("jump threshold must be positive");
  const std::size_t n = log_prices.size();
  if (n < 12) throw DegenerateSeries("jump-diffusion fit needs at least a dozen observations");
  const std::size_t m = n - 1;
  std::vector<double> lag(m);
  std::vector<double> ret(m);
  for (std::size_t t = 0; t < m; ++t) {
    lag[t] = log_prices[t];
    ret[t] = log_prices[t + 1] - log_prices[t];
    if (!std::isfinite(ret[t])) throw DegenerateSeries("series contains non-finite values");
  }

  double mean_ret = 0.0;
  for (double r : ret) mean_ret += r;
  mean_ret /= static_cast<double>(m);
  double var_ret = 0.0;
  for (double r : ret) var_ret += (r - mean_ret) * (r - mean_ret);
  var_ret /= static_cast<double>(m - 1);
  if (!(var_ret > 0.0)) throw DegenerateSeries("returns have zero variance");

  // Plain rule first: flag returns more than threshold_sd standard deviations from their mean.
  std::vector<char> flagged(m);
  double threshold = opts.threshold_sd * std::sqrt(var_ret);
  for (std::size_t t = 0; t < m; ++t) flagged[t] = std::abs(ret[t] - mean_ret) > threshold;
  std::vector<double> flag_basis = ret;
  for (double& r : flag_basis) r -= mean_ret;

  LineFit line = ols_line(lag, ret, flagged);
  std::vector<double> resid(m);
  auto refresh_residuals = [&] {
    for (std::size_t t = 0; t < m; ++t) resid[t] = ret[t] - line.intercept - line.slope * lag[t];
  };
  refresh_residuals();
  auto unflagged_rms = [&] {
    double s = 0.0;
    double c = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      if (flagged[t]) continue;
      s += resid[t] * resid[t];
      c += 1.0;
    }
    return std::sqrt(s / c);
  };

  // Refine: flag on regression residuals, scaled by the spread of the unflagged ones.
  for (int it = 0; it < opts.max_refinements; ++it) {
    const double s = unflagged_rms();
    threshold = opts.threshold_sd * s;
    bool changed = false;
    for (std::size_t t = 0; t < m; ++t) {
      const char f = std::abs(resid[t]) > threshold;
      changed |= f != flagged[t];
      flagged[t] = f;
    }
    flag_basis = resid;
    if (!changed) break;
    line = ols_line(lag, ret, flagged);
    refresh_residuals();
  }

  JumpDiffusionFit fit;
  fit.threshold = threshold;
  if (!(line.slope < 0.0)) throw DegenerateSeries("series shows no mean reversion");
  fit.mean_reversion = -line.slope / step_years;
  fit.long_run_level = line.intercept / (fit.mean_reversion * step_years);
  fit.volatility = unflagged_rms() / std::sqrt(step_years);

  std::vector<double> jumps;
  for (std::size_t t = 0; t < m; ++t) {
    if (flagged[t]) jumps.push_back(flag_basis[t]);
  }
  fit.flagged_returns = static_cast<int>(jumps.size());
  if (jumps.empty()) return fit;

  if (opts.counting == JumpCounting::Halve) {
    fit.jump_events = 0.5 * static_cast<double>(jumps.size());
  } else {
    double events = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      if (!flagged[t]) continue;
      events += 1.0;
      if (t + 1 < m && flagged[t + 1] && flag_basis[t] * flag_basis[t + 1] < 0.0) ++t;
    }
    fit.jump_events = events;
  }
  fit.jump_probability = fit.jump_events / static_cast<double>(m);
  double jm = 0.0;
  for (double j : jumps) jm += j;
  jm /= static_cast<double>(jumps.size());
  double jv = 0.0;
  for (double j : jumps) jv += (j - jm) * (j - jm);
  fit.jump_sd = jumps.size() > 1 ? std::sqrt(jv / static_cast<double>(jumps.size() - 1)) : 0.0;

  if (opts.correct_truncation) {
    double total = 0.0;
    double flagged_moment = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      total += resid[t] * resid[t];
      if (flagged[t]) flagged_moment += resid[t] * resid[t];
    }
    total /= static_cast<double>(m);
    flagged_moment /= static_cast<double>(jumps.size());
    const double fraction = static_cast<double>(jumps.size()) / static_cast<double>(m);
    const MixtureSolution sol = solve_truncated_mixture(fraction, flagged_moment, total, threshold);
    const double events_per_flag = fit.jump_events / static_cast<double>(jumps.size());
    fit.jump_probability = sol.jump_rate * events_per_flag;
    fit.jump_sd = std::sqrt(sol.jump_variance);
    fit.volatility = std::sqrt(sol.diffusion_variance) / std::sqrt(step_years);
    if (sol.jump_rate <= 0.0) fit.jump_sd = 0.0;
  }
  return fit;
}

SeasonalFit fit_seasonals(std::span<const double> values, std::span<const CalendarPosition> calendar) {
  if (values.size() != calendar.size()) throw DimensionMismatch("one calendar slot per observation is required");
  const std::size_t n = values.size();
  std::array<double, kHoursPerWeek> hour_count{};
  std::array<double, kMonths> month_count{};
  for (std::size_t t = 0; t < n; ++t) {
    const auto& c = calendar[t];
    if (c.hour_of_week < 0 || c.hour_of_week >= kHoursPerWeek || c.month < 0 || c.month >= kMonths) {
      throw ValidationError("calendar slot out of range");
    }
    if (!std::isfinite(values[t])) throw ValidationError("series contains non-finite values");
    hour_count[static_cast<std::size_t>(c.hour_of_week)] += 1.0;
    month_count[static_cast<std::size_t>(c.month)] += 1.0;
  }
  for (int h = 0; h < kHoursPerWeek; ++h) {
    if (hour_count[h] == 0.0) throw EmptyBucket("hour-of-week", h);
  }
  for (int mo = 0; mo < kMonths; ++mo) {
    if (month_count[mo] == 0.0) throw EmptyBucket("month", mo);
  }

  SeasonalFit fit;
  double scale = 0.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  const double tol = 1e-14 * std::max(scale, 1.0);
  for (int iter = 0; iter < 10000; ++iter) {
    std::array<double, kHoursPerWeek> hour{};
    for (std::size_t t = 0; t < n; ++t) {
      hour[static_cast<std::size_t>(calendar[t].hour_of_week)] +=
          values[t] - fit.month_of_year[static_cast<std::size_t>(calendar[t].month)];
    }
    for (int h = 0; h < kHoursPerWeek; ++h) hour[h] /= hour_count[h];
    std::array<double, kMonths> month{};
    for (std::size_t t = 0; t < n; ++t) {
      month[static_cast<std::size_t>(calendar[t].month)] +=
          values[t] - hour[static_cast<std::size_t>(calendar[t].hour_of_week)];
    }
    double month_mean = 0.0;
    for (int mo = 0; mo < kMonths; ++mo) {
      month[mo] /= month_count[mo];
      month_mean += month[mo] / kMonths;
    }
    double change = 0.0;
    for (int mo = 0; mo < kMonths; ++mo) {
      month[mo] -= month_mean;
      change = std::max(change, std::abs(month[mo] - fit.month_of_year[mo]));
    }
    for (int h = 0; h < kHoursPerWeek; ++h) {
      hour[h] += month_mean;
      change = std::max(change, std::abs(hour[h] - fit.hour_of_week[h]));
    }
    fit.hour_of_week = hour;
    fit.month_of_year = month;
    if (change <= tol) break;
  }
  fit.residual.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    fit.residual[t] = values[t] - fit.hour_of_week[static_cast<std::size_t>(calendar[t].hour_of_week)] -
                      fit.month_of_year[static_cast<std::size_t>(calendar[t].month)];
  }
  return fit;
}

std::array<double, 6> fit_demand_polynomial(std::span<const double> load, std::span<const double> temperature) {
  if (load.size() != temperature.size()) throw DimensionMismatch("load and temperature lengths differ");
  std::vector<double> distinct(temperature.begin(), temperature.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 6) {
    throw RankDeficient("a quintic needs at least six distinct temperatures", std::numeric_limits<double>::infinity());
  }
  // Fit in a centred, scaled variable and expand back to raw powers.
  const double center = 0.5 * (distinct.front() + distinct.back());
  const double half = 0.5 * (distinct.back() - distinct.front());
  const auto n = static_cast<Eigen::Index>(load.size());
  Eigen::MatrixXd design(n, 6);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (temperature[static_cast<std::size_t>(i)] - center) / half;
    double p = 1.0;
    for (int j = 0; j < 6; ++j) {
      design(i, j) = p;
      p *= u;
    }
    y(i) = load[static_cast<std::size_t>(i)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < 6) throw RankDeficient("temperature design is rank deficient", std::numeric_limits<double>::infinity());
  const Eigen::VectorXd beta = qr.solve(y);
  std::array<double, 6> alpha{};
  const double binom[6][6] = {{1, 0, 0, 0, 0, 0},  {1, 1, 0, 0, 0, 0},   {1, 2, 1, 0, 0, 0},
                              {1, 3, 3, 1, 0, 0},  {1, 4, 6, 4, 1, 0},   {1, 5, 10, 10, 5, 1}};
  for (int j = 0; j < 6; ++j) {
    const double scaled = beta(j) / std::pow(half, j);
    for (int i = 0; i <= j; ++i) alpha[i] += scaled * binom[j][i] * std::pow(-center, j - i);
  }
  return alpha;
}

double evaluate_polynomial(const std::array<double, 6>& coefficients, double x) {
  double acc = 0.0;
  for (int j = 5; j >= 0; --j) acc = acc * x + coefficients[j];
  return acc;
}

}  // namespace adp::storage
