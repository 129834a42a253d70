#include "adp/stochastic_models.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "adp/errors.hpp"

namespace adp::storage {

CalendarPosition calendar_from_unix(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const std::int64_t day = unix_seconds >= 0 ? unix_seconds / 86400 : -((-unix_seconds + 86399) / 86400);
  const std::int64_t second_of_day = unix_seconds - day * 86400;
  // 1970-01-01 was a Thursday, which is day 3 when Monday is day 0.
  const std::int64_t weekday = ((day + 3) % 7 + 7) % 7;
  const year_month_day ymd{sys_days{days{day}}};
  CalendarPosition at;
  at.hour_of_week = static_cast<int>(weekday * 24 + second_of_day / 3600);
  at.month = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
  at.time_of_day = static_cast<int>(second_of_day / 900);
  return at;
}

void WindModel::validate() const {
  if (!(std::abs(ar_coefficient) < 1.0)) throw ValidationError("wind AR coefficient must be inside (-1, 1)");
  if (!(noise_sd >= 0.0)) throw ValidationError("wind noise must be non-negative");
  if (!(power_coefficient > 0.0 && air_density > 0.0 && rotor_radius > 0.0)) {
    throw ValidationError("turbine constants must be positive");
  }
}

double WindModel::stationary_sd() const { return noise_sd / std::sqrt(1.0 - ar_coefficient * ar_coefficient); }

double WindModel::mean_cubed_speed() const {
  const double m = mean_sqrt_speed;
  const double v = stationary_sd() * stationary_sd();
  return std::pow(m, 6) + 15.0 * std::pow(m, 4) * v + 45.0 * m * m * v * v + 15.0 * v * v * v;
}

double wind_power(double speed, double step_seconds, const WindModel& model) {
  const double area = std::numbers::pi * model.rotor_radius * model.rotor_radius;
  return (1e-8 / 36.0) * 0.5 * model.power_coefficient * model.air_density * area * speed * speed * speed *
         step_seconds;
}

WindStep wind_step(const WindModel& model, double deviation, double step_seconds, Rng& rng) {
  WindStep out;
  out.deviation = model.ar_coefficient * deviation + model.noise_sd * standard_normal(rng);
  const double root = out.deviation + model.mean_sqrt_speed;
  out.speed = root * root;
  out.energy = wind_power(out.speed, step_seconds, model);
  return out;
}

void PriceModel::validate(double step_years) const {
  if (!(mean_reversion > 0.0)) throw ValidationError("price mean reversion must be positive");
  if (mean_reversion * step_years >= 2.0) {
    throw ParameterMismatch("mean reversion times step length must stay below 2; check that rates are per year");
  }
  if (!(volatility >= 0.0 && jump_sd >= 0.0)) throw ValidationError("price volatilities must be non-negative");
  if (!(jump_probability >= 0.0 && jump_probability <= 1.0)) throw ValidationError("jump probability outside [0, 1]");
}

double PriceModel::price_from_log(double deseasonalized, const CalendarPosition& at) const {
  return std::exp(deseasonalized + seasonal(at)) - shift;
}

double PriceModel::stationary_sd(double step_years) const {
  const double a = 1.0 - mean_reversion * step_years;
  const double innovation = volatility * volatility * step_years + jump_probability * jump_sd * jump_sd;
  return std::sqrt(innovation / (1.0 - a * a));
}

PriceStep price_step(const PriceModel& model, double deseasonalized, const CalendarPosition& next,
                     double step_years, Rng& rng) {
  if (model.mean_reversion * step_years >= 2.0) {
    throw ParameterMismatch("mean reversion times step length must stay below 2; check that rates are per year");
  }
  // Always draw three variates so paths stay aligned whatever the jump outcome.
  const double diffusion = standard_normal(rng);
  const double u = uniform01(rng);
  const double jump_draw = standard_normal(rng);
  const double jump = u < model.jump_probability ? model.jump_sd * jump_draw : 0.0;
  PriceStep out;
  out.deseasonalized = deseasonalized + model.mean_reversion * (model.long_run_level - deseasonalized) * step_years +
                       model.volatility * std::sqrt(step_years) * diffusion + jump;
  out.price = model.price_from_log(out.deseasonalized, next);
  return out;
}

void DemandModel::validate() const {
  if (!(std::abs(ar_coefficient) < 1.0)) throw ValidationError("demand AR coefficient must be inside (-1, 1)");
  if (!(noise_variance >= 0.0)) throw ValidationError("demand noise variance must be non-negative");
}

double DemandModel::mean_level() const {
  const double h = std::accumulate(hour_of_week.begin(), hour_of_week.end(), 0.0) / kHoursPerWeek;
  const double m = std::accumulate(month_of_year.begin(), month_of_year.end(), 0.0) / kMonths;
  return h + m;
}

double DemandModel::stationary_sd() const {
  return std::sqrt(noise_variance / (1.0 - ar_coefficient * ar_coefficient));
}

DemandStep demand_step(const DemandModel& model, double deseasonalized, const CalendarPosition& next, Rng& rng) {
  DemandStep out;
  out.deseasonalized = model.ar_coefficient * deseasonalized + std::sqrt(model.noise_variance) * standard_normal(rng);
  const double level = model.hour_of_week[static_cast<std::size_t>(next.hour_of_week)] +
                       model.month_of_year[static_cast<std::size_t>(next.month)] + out.deseasonalized;
  out.demand = std::max(0.0, level);
  return out;
}

void StochasticModels::validate() const {
  wind.validate();
  price.validate();
  demand.validate();
}

namespace {

template <std::size_t N>
void center(std::array<double, N>& a) {
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(N);
  for (double& x : a) x -= mean;
}

}  // namespace

StochasticModels default_models() {
  StochasticModels m;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (int h = 0; h < kHoursPerWeek; ++h) {
    const double hour = h % 24;
    const bool weekend = h >= 5 * 24;
    // Prices bottom out early morning and peak in the evening; weekends are cheaper.
    m.price.hour_of_week[h] = 0.25 * std::sin(two_pi * (hour - 12.0) / 24.0) - (weekend ? 0.08 : 0.0);
    m.demand.hour_of_week[h] =
        35000.0 * (1.0 + 0.15 * std::sin(two_pi * (hour - 10.0) / 24.0)) - (weekend ? 2000.0 : 0.0);
  }
  for (int mo = 0; mo < kMonths; ++mo) {
    m.price.month_of_year[mo] = 0.06 * std::cos(two_pi * (mo - 7.0) / 12.0);
    m.demand.month_of_year[mo] = 3000.0 * std::cos(two_pi * (mo - 7.0) / 12.0);
  }
  center(m.price.hour_of_week);
  center(m.price.month_of_year);
  center(m.demand.month_of_year);
  return m;
}

}  // namespace adp::storage
