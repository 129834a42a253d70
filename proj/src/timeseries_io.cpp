#include "adp/timeseries_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "adp/errors.hpp"
#include "adp/random.hpp"

namespace adp::storage {

namespace fs = std::filesystem;

std::vector<CalendarPosition> TimeSeries::calendar() const {
  std::vector<CalendarPosition> out;
  out.reserve(unix_seconds.size());
  for (auto t : unix_seconds) out.push_back(calendar_from_unix(t));
  return out;
}

std::string format_iso8601(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const std::int64_t day = unix_seconds >= 0 ? unix_seconds / 86400 : -((-unix_seconds + 86399) / 86400);
  const std::int64_t sod = unix_seconds - day * 86400;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(sod / 3600),
                static_cast<int>((sod / 60) % 60), static_cast<int>(sod % 60));
  return buf;
}

std::int64_t parse_iso8601(const std::string& text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  int hh = 0;
  int mm = 0;
  int ss = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%n", &y, &mo, &d, &hh, &mm, &ss, &consumed) != 6) {
    throw ValidationError("malformed timestamp '" + text + "'");
  }
  const std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z")) throw ValidationError("unsupported timestamp suffix in '" + text + "'");
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 59) {
    throw ValidationError("invalid calendar timestamp '" + text + "'");
  }
  const auto days_since = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days_since) * 86400 + hh * 3600 + mm * 60 + ss;
}

namespace {

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

TimeSeries read_time_series_csv(std::istream& in) {
  TimeSeries series;
  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw DataFormatError("empty file; expected header 'timestamp,value'", 1);
  ++line_no;
  if (trim(line) != "timestamp,value") throw DataFormatError("expected header 'timestamp,value'", line_no);
  const auto step = static_cast<std::int64_t>(kStepSeconds);
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw DataFormatError("expected two comma-separated fields", line_no);
    std::int64_t t = 0;
    try {
      t = parse_iso8601(trim(line.substr(0, comma)));
    } catch (const ValidationError& e) {
      throw DataFormatError(e.what(), line_no);
    }
    const std::string field = trim(line.substr(comma + 1));
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
      throw DataFormatError("value '" + field + "' is not a finite number", line_no);
    }
    if (!series.unix_seconds.empty()) {
      const std::int64_t diff = t - series.unix_seconds.back();
      if (diff > step && diff % step == 0) {
        throw DataFormatError("gap of " + std::to_string(diff / step - 1) + " missing 15-minute steps before this row",
                              line_no);
      }
      if (diff != step) throw DataFormatError("timestamps must advance by exactly 15 minutes", line_no);
    }
    series.unix_seconds.push_back(t);
    series.values.push_back(v);
  }
  return series;
}

TimeSeries read_time_series_csv(const fs::path& path) {
  auto in = open_in(path);
  try {
    return read_time_series_csv(in);
  } catch (const DataFormatError& e) {
    throw DataFormatError(path.filename().string() + ": " + e.what(), e.line());
  }
}

void write_time_series_csv(std::ostream& out, const TimeSeries& series) {
  out << "timestamp,value\n";
  char buf[64];
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof buf, series.values[i]);
    out << format_iso8601(series.unix_seconds[i]) << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf))
        << '\n';
  }
}

void write_time_series_csv(const fs::path& path, const TimeSeries& series) {
  auto out = open_out(path);
  write_time_series_csv(out, series);
}

SyntheticDataset generate_synthetic_dataset(const StochasticModels& models, std::int64_t n_steps, std::uint64_t seed,
                                            std::int64_t start_unix) {
  if (n_steps < 0) throw ValidationError("step count must be non-negative");
  models.validate();
  SyntheticDataset data;
  Rng wind_rng = make_stream(seed, Stream::Synthetic, 0);
  Rng price_rng = make_stream(seed, Stream::Synthetic, 1);
  Rng demand_rng = make_stream(seed, Stream::Synthetic, 2);
  Rng temp_rng = make_stream(seed, Stream::Synthetic, 3);

  double wind_dev = models.wind.stationary_sd() * standard_normal(wind_rng);
  double price_dev = models.price.long_run_level + models.price.stationary_sd() * standard_normal(price_rng);
  double demand_dev = models.demand.stationary_sd() * standard_normal(demand_rng);
  double temp_dev = 0.0;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  const auto step = static_cast<std::int64_t>(kStepSeconds);
  for (auto* s : {&data.price, &data.load, &data.wind_speed, &data.temperature}) {
    s->unix_seconds.reserve(static_cast<std::size_t>(n_steps));
    s->values.reserve(static_cast<std::size_t>(n_steps));
  }
  for (std::int64_t t = 0; t < n_steps; ++t) {
    const std::int64_t now = start_unix + t * step;
    const CalendarPosition at = calendar_from_unix(now);
    const double root = wind_dev + models.wind.mean_sqrt_speed;
    const double load = std::max(0.0, models.demand.hour_of_week[at.hour_of_week] +
                                          models.demand.month_of_year[at.month] + demand_dev);
    const double day_of_year = static_cast<double>((now - start_unix) / 86400 % 365);
    const double hour = at.time_of_day / 4.0;
    const double temperature = 20.0 + 8.0 * std::cos(two_pi * (day_of_year - 200.0) / 365.0) +
                               5.0 * std::sin(two_pi * (hour - 9.0) / 24.0) + temp_dev;
    for (auto* s : {&data.price, &data.load, &data.wind_speed, &data.temperature}) s->unix_seconds.push_back(now);
    data.price.values.push_back(models.price.price_from_log(price_dev, at));
    data.load.values.push_back(load);
    data.wind_speed.values.push_back(root * root);
    data.temperature.values.push_back(temperature);

    const CalendarPosition next = calendar_from_unix(now + step);
    wind_dev = wind_step(models.wind, wind_dev, kStepSeconds, wind_rng).deviation;
    price_dev = price_step(models.price, price_dev, next, kStepYears, price_rng).deseasonalized;
    demand_dev = demand_step(models.demand, demand_dev, next, demand_rng).deseasonalized;
    temp_dev = 0.98 * temp_dev + 0.3 * standard_normal(temp_rng);
  }
  return data;
}

void write_dataset(const fs::path& dir, const SyntheticDataset& data) {
  fs::create_directories(dir);
  write_time_series_csv(dir / "price.csv", data.price);
  write_time_series_csv(dir / "load.csv", data.load);
  write_time_series_csv(dir / "wind.csv", data.wind_speed);
  write_time_series_csv(dir / "temperature.csv", data.temperature);
}

SyntheticDataset read_dataset(const fs::path& dir) {
  SyntheticDataset data;
  data.price = read_time_series_csv(dir / "price.csv");
  data.load = read_time_series_csv(dir / "load.csv");
  data.wind_speed = read_time_series_csv(dir / "wind.csv");
  if (fs::exists(dir / "temperature.csv")) data.temperature = read_time_series_csv(dir / "temperature.csv");
  return data;
}

ModelFitReport fit_models(const SyntheticDataset& data, const ModelFitOptions& opts) {
  ModelFitReport report;
  StochasticModels& m = report.models;

  std::vector<double> roots(data.wind_speed.values.size());
  for (std::size_t i = 0; i < roots.size(); ++i) {
    if (data.wind_speed.values[i] < 0.0) throw ValidationError("wind speeds must be non-negative");
    roots[i] = std::sqrt(data.wind_speed.values[i]);
  }
  report.wind_fit = fit_ar1(roots);
  m.wind.mean_sqrt_speed = report.wind_fit.mean;
  m.wind.ar_coefficient = report.wind_fit.coefficient;
  m.wind.noise_sd = report.wind_fit.noise_sd();

  if (data.price.size() == 0) throw DegenerateSeries("price series is empty");
  const double min_price = *std::min_element(data.price.values.begin(), data.price.values.end());
  const double reference_shift = PriceModel{}.shift;
  const double shift = opts.price_shift.value_or(min_price + reference_shift > 0.5 ? reference_shift : 1.0 - min_price);
  if (!(min_price + shift > 0.0)) throw ValidationError("price shift leaves non-positive prices");
  std::vector<double> logs(data.price.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(data.price.values[i] + shift);
  const SeasonalFit price_season = fit_seasonals(logs, data.price.calendar());
  report.price_fit = fit_jump_diffusion(price_season.residual, kStepYears, opts.jumps);
  const double level =
      std::accumulate(price_season.hour_of_week.begin(), price_season.hour_of_week.end(), 0.0) / kHoursPerWeek;
  m.price.mean_reversion = report.price_fit.mean_reversion;
  m.price.long_run_level = report.price_fit.long_run_level + level;
  m.price.volatility = report.price_fit.volatility;
  m.price.jump_probability = report.price_fit.jump_probability;
  m.price.jump_sd = report.price_fit.jump_sd;
  m.price.shift = shift;
  for (int h = 0; h < kHoursPerWeek; ++h) m.price.hour_of_week[h] = price_season.hour_of_week[h] - level;
  m.price.month_of_year = price_season.month_of_year;

  const SeasonalFit load_season = fit_seasonals(data.load.values, data.load.calendar());
  report.demand_fit = fit_ar1(load_season.residual);
  m.demand.hour_of_week = load_season.hour_of_week;
  m.demand.month_of_year = load_season.month_of_year;
  m.demand.ar_coefficient = report.demand_fit.coefficient;
  m.demand.noise_variance = report.demand_fit.noise_variance;
  if (data.temperature.size() > 0) {
    if (data.temperature.size() != data.load.size()) throw DimensionMismatch("temperature and load lengths differ");
    m.demand.temperature_polynomial = fit_demand_polynomial(data.load.values, data.temperature.values);
  }
  return report;
}

namespace {

template <std::size_t N>
std::array<double, N> read_array(const nlohmann::json& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array() || arr.size() != N) {
    throw ValidationError(std::string("field '") + key + "' must hold " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = arr[i].get<double>();
  return out;
}

}  // namespace

nlohmann::json models_to_json(const StochasticModels& models) {
  nlohmann::json doc;
  doc["schema_version"] = kModelSchemaVersion;
  doc["wind"] = {{"mean_sqrt_speed", models.wind.mean_sqrt_speed},
                 {"ar_coefficient", models.wind.ar_coefficient},
                 {"noise_sd", models.wind.noise_sd},
                 {"power_coefficient", models.wind.power_coefficient},
                 {"air_density_kg_m3", models.wind.air_density},
                 {"rotor_radius_m", models.wind.rotor_radius}};
  doc["price"] = {{"mean_reversion_per_year", models.price.mean_reversion},
                  {"long_run_level", models.price.long_run_level},
                  {"volatility_per_sqrt_year", models.price.volatility},
                  {"jump_probability_per_step", models.price.jump_probability},
                  {"jump_sd", models.price.jump_sd},
                  {"shift_usd_per_mwh", models.price.shift},
                  {"hour_of_week", models.price.hour_of_week},
                  {"month_of_year", models.price.month_of_year}};
  doc["demand"] = {{"ar_coefficient", models.demand.ar_coefficient},
                   {"noise_variance_mwh2", models.demand.noise_variance},
                   {"hour_of_week_mwh", models.demand.hour_of_week},
                   {"month_of_year_mwh", models.demand.month_of_year}};
  if (models.demand.temperature_polynomial) {
    doc["demand"]["temperature_polynomial"] = *models.demand.temperature_polynomial;
  } else {
    doc["demand"]["temperature_polynomial"] = nullptr;
  }
  return doc;
}

StochasticModels models_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kModelSchemaVersion) {
      throw ValidationError("unsupported model schema version " + std::to_string(version));
    }
    StochasticModels m;
    const auto& w = doc.at("wind");
    m.wind.mean_sqrt_speed = w.at("mean_sqrt_speed").get<double>();
    m.wind.ar_coefficient = w.at("ar_coefficient").get<double>();
    m.wind.noise_sd = w.at("noise_sd").get<double>();
    m.wind.power_coefficient = w.at("power_coefficient").get<double>();
    m.wind.air_density = w.at("air_density_kg_m3").get<double>();
    m.wind.rotor_radius = w.at("rotor_radius_m").get<double>();
    const auto& p = doc.at("price");
    m.price.mean_reversion = p.at("mean_reversion_per_year").get<double>();
    m.price.long_run_level = p.at("long_run_level").get<double>();
    m.price.volatility = p.at("volatility_per_sqrt_year").get<double>();
    m.price.jump_probability = p.at("jump_probability_per_step").get<double>();
    m.price.jump_sd = p.at("jump_sd").get<double>();
    m.price.shift = p.at("shift_usd_per_mwh").get<double>();
    m.price.hour_of_week = read_array<kHoursPerWeek>(p, "hour_of_week");
    m.price.month_of_year = read_array<kMonths>(p, "month_of_year");
    const auto& d = doc.at("demand");
    m.demand.ar_coefficient = d.at("ar_coefficient").get<double>();
    m.demand.noise_variance = d.at("noise_variance_mwh2").get<double>();
    m.demand.hour_of_week = read_array<kHoursPerWeek>(d, "hour_of_week_mwh");
    m.demand.month_of_year = read_array<kMonths>(d, "month_of_year_mwh");
    if (d.contains("temperature_polynomial") && !d.at("temperature_polynomial").is_null()) {
      m.demand.temperature_polynomial = read_array<6>(d, "temperature_polynomial");
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

StochasticModels load_models(const fs::path& path) {
  auto in = open_in(path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return models_from_json(doc);
}

void save_models(const fs::path& path, const StochasticModels& models) {
  auto out = open_out(path);
  out << models_to_json(models).dump(2) << '\n';
}

}  // namespace adp::storage
