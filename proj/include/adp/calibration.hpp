#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "adp/stochastic_models.hpp"

namespace adp::storage {

struct Ar1Fit {
  double mean = 0.0;
  double coefficient = 0.0;
  double noise_variance = 0.0;
  double noise_sd() const;
};

// Yule-Walker: coefficient = lag-1 autocorrelation, noise variance = (1 - coefficient^2) * variance.
Ar1Fit fit_ar1(std::span<const double> series);

enum class JumpCounting {
  // Count every flagged return; a flagged return immediately followed by an opposite-sign
  // flagged return (a spike and its reversal) counts once.
  MergeReversals,
  // Divide the number of flagged returns by two.
  Halve,
};

struct JumpFitOptions {
  double threshold_sd = 3.0;
  JumpCounting counting = JumpCounting::MergeReversals;
  // The threshold rule only sees jumps larger than the threshold. When set, jump rate, jump
  // size and diffusion volatility are solved jointly so that the two-component normal
  // mixture reproduces the flagged fraction and the second moments that were observed.
  bool correct_truncation = true;
  int max_refinements = 50;
};

struct JumpDiffusionFit {
  double mean_reversion = 0.0;  // per year
  double long_run_level = 0.0;
  double volatility = 0.0;      // per sqrt(year)
  double jump_probability = 0.0;
  double jump_sd = 0.0;
  int flagged_returns = 0;
  double jump_events = 0.0;
  double threshold = 0.0;       // absolute residual threshold used for flagging
};

JumpDiffusionFit fit_jump_diffusion(std::span<const double> log_prices, double step_years = kStepYears,
                                    const JumpFitOptions& opts = {});

struct SeasonalFit {
  std::array<double, kHoursPerWeek> hour_of_week{};  // carries the overall level
  std::array<double, kMonths> month_of_year{};       // zero mean
  std::vector<double> residual;
};

// Additive hour-of-week + month-of-year fit by alternating bucket means.
SeasonalFit fit_seasonals(std::span<const double> values, std::span<const CalendarPosition> calendar);

// Degree-5 least squares of load on temperature; coefficients in increasing powers.
std::array<double, 6> fit_demand_polynomial(std::span<const double> load, std::span<const double> temperature);

double evaluate_polynomial(const std::array<double, 6>& coefficients, double x);

}  // namespace adp::storage
