#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adp/calibration.hpp"
#include "adp/stochastic_models.hpp"

namespace adp::storage {

inline constexpr int kModelSchemaVersion = 1;

struct TimeSeries {
  std::vector<std::int64_t> unix_seconds;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  std::vector<CalendarPosition> calendar() const;
};

std::string format_iso8601(std::int64_t unix_seconds);
// Accepts YYYY-MM-DDTHH:MM:SS with an optional trailing Z. Throws ValidationError.
std::int64_t parse_iso8601(const std::string& text);

// CSV with header `timestamp,value` at a fixed 15-minute spacing. Gaps, duplicates and
// malformed rows raise DataFormatError carrying the 1-based line number.
TimeSeries read_time_series_csv(std::istream& in);
TimeSeries read_time_series_csv(const std::filesystem::path& path);
void write_time_series_csv(std::ostream& out, const TimeSeries& series);
void write_time_series_csv(const std::filesystem::path& path, const TimeSeries& series);

struct SyntheticDataset {
  TimeSeries price;        // $/MWh
  TimeSeries load;         // MWh per hour
  TimeSeries wind_speed;   // m/s
  TimeSeries temperature;  // deg C
};

SyntheticDataset generate_synthetic_dataset(const StochasticModels& models, std::int64_t n_steps,
                                            std::uint64_t seed, std::int64_t start_unix = kSimulationEpoch);
// Writes price.csv, load.csv, wind.csv and temperature.csv into `dir`.
void write_dataset(const std::filesystem::path& dir, const SyntheticDataset& data);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

struct ModelFitOptions {
  // Shift added to prices before taking logs. Defaults to the reference shift, raised
  // when the data dip below it.
  std::optional<double> price_shift;
  JumpFitOptions jumps;
};

struct ModelFitReport {
  StochasticModels models;
  JumpDiffusionFit price_fit;
  Ar1Fit wind_fit;
  Ar1Fit demand_fit;
};

ModelFitReport fit_models(const SyntheticDataset& data, const ModelFitOptions& opts = {});

nlohmann::json models_to_json(const StochasticModels& models);
StochasticModels models_from_json(const nlohmann::json& doc);
StochasticModels load_models(const std::filesystem::path& path);
void save_models(const std::filesystem::path& path, const StochasticModels& models);

}  // namespace adp::storage
