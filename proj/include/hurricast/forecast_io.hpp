#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hurricast/forecast.hpp"

namespace hurricast {

inline constexpr std::string_view kForecastCsvHeader = "sid,iso_t0,pred_wind,pred_dlat,pred_dlon,pred_lat,pred_lon";
inline constexpr std::string_view kOperationalCsvHeader =
    "model,sid,iso_t0,pred_wind,pred_dlat,pred_dlon,pred_lat,pred_lon";

/// Writes one model's forecasts. `comment` lines are emitted first, each
/// prefixed with "# "; the model id goes into a "# model=" line.
void write_forecast_csv(const std::filesystem::path& path, std::span<const ForecastRecord> records,
                        std::span<const std::string> comment = {});

/// Reads a forecast CSV. The model id comes from its "# model=" line, or the
/// file stem when absent.
std::vector<ForecastRecord> read_forecast_csv(const std::filesystem::path& path);

/// Multi-model file with a leading model column.
void write_operational_csv(const std::filesystem::path& path, std::span<const ForecastRecord> records,
                           std::span<const std::string> comment = {});
std::vector<ForecastRecord> read_operational_csv(const std::filesystem::path& path);

/// "%.17g"; keeps CSV round trips exact.
std::string format_exact(double v);

}  // namespace hurricast
