#pragma once

#include <string>

#include "hurricast/datetime.hpp"

namespace hurricast {

/// One model's 24-h forecast for one case.
struct ForecastRecord {
  std::string model_id;
  std::string storm_id;
  TimePoint t0;
  double wind = 0.0;  // kt
  double dlat = 0.0;  // degrees over 24 h
  double dlon = 0.0;
  double lat = 0.0;  // predicted position at t0 + 24 h
  double lon = 0.0;

  std::string case_id() const { return storm_id + "@" + format_iso8601(t0); }
};

}  // namespace hurricast
