#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "adp/random.hpp"

namespace adp::storage {

inline constexpr double kStepSeconds = 900.0;
inline constexpr double kStepYears = 1.0 / 35040.0;  // one 15-minute step, in years
inline constexpr int kHoursPerWeek = 168;
inline constexpr int kMonths = 12;
inline constexpr int kStepsPerDay = 96;
// Simulated clocks start at 2010-01-01T00:00:00Z.
inline constexpr std::int64_t kSimulationEpoch = 1262304000;

struct CalendarPosition {
  int hour_of_week = 0;  // 0 = Monday 00:00-01:00 UTC
  int month = 0;         // 0 = January
  int time_of_day = 0;   // quarter-hour of the day, 0..95
};

CalendarPosition calendar_from_unix(std::int64_t unix_seconds);
inline CalendarPosition calendar_at_step(std::int64_t step) {
  return calendar_from_unix(kSimulationEpoch + step * static_cast<std::int64_t>(kStepSeconds));
}

// Square root of wind speed follows a zero-mean AR(1) around mean_sqrt_speed.
struct WindModel {
  double mean_sqrt_speed = 1.4781;
  double ar_coefficient = 0.7633;
  double noise_sd = 0.4020;
  double power_coefficient = 0.45;
  double air_density = 1.225;
  double rotor_radius = 50.0;  // m

  void validate() const;
  double stationary_sd() const;
  // E[W^3] under the stationary law, W = (mean + Y)^2.
  double mean_cubed_speed() const;
};

// Energy (MWh) one turbine produces over step_seconds at wind speed `speed` (m/s).
double wind_power(double speed, double step_seconds, const WindModel& model = {});

struct WindStep {
  double deviation = 0.0;  // AR(1) state
  double speed = 0.0;
  double energy = 0.0;     // single-turbine MWh
};

WindStep wind_step(const WindModel& model, double deviation, double step_seconds, Rng& rng);

// Log price (shifted by `shift`) is a seasonal term plus a mean-reverting jump diffusion.
// Rates are per year.
struct PriceModel {
  double mean_reversion = 1800.9;
  double long_run_level = 4.1995;
  double volatility = 11.0971;
  double jump_probability = 0.0170;
  double jump_sd = 0.4229;
  double shift = 27.2531;
  std::array<double, kHoursPerWeek> hour_of_week{};
  std::array<double, kMonths> month_of_year{};

  void validate(double step_years = kStepYears) const;
  double seasonal(const CalendarPosition& at) const {
    return hour_of_week[static_cast<std::size_t>(at.hour_of_week)] + month_of_year[static_cast<std::size_t>(at.month)];
  }
  double price_from_log(double deseasonalized, const CalendarPosition& at) const;
  // Stationary standard deviation of the deseasonalized log price.
  double stationary_sd(double step_years = kStepYears) const;
};

struct PriceStep {
  double deseasonalized = 0.0;
  double price = 0.0;
};

// Advances the deseasonalized log price one step; `next` is the calendar slot of the new value.
PriceStep price_step(const PriceModel& model, double deseasonalized, const CalendarPosition& next,
                     double step_years, Rng& rng);

// Load = hour-of-week mean + month offset + AR(1) residual, floored at zero.
struct DemandModel {
  std::array<double, kHoursPerWeek> hour_of_week{};
  std::array<double, kMonths> month_of_year{};
  double ar_coefficient = 0.9636;
  double noise_variance = 914870.0;
  std::optional<std::array<double, 6>> temperature_polynomial;

  void validate() const;
  double mean_level() const;
  double stationary_sd() const;
};

struct DemandStep {
  double deseasonalized = 0.0;
  double demand = 0.0;
};

DemandStep demand_step(const DemandModel& model, double deseasonalized, const CalendarPosition& next, Rng& rng);

struct StochasticModels {
  WindModel wind;
  PriceModel price;
  DemandModel demand;

  void validate() const;
};

// Published wind/price/load parameters with synthetic daily and yearly profiles.
StochasticModels default_models();

}  // namespace adp::storage
