#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hurricast/forecast.hpp"
#include "hurricast/storm_data.hpp"

namespace hurricast::eval {

inline constexpr double kEarthRadiusKm = 6371.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

/// Great-circle distance in km on a 6371 km sphere. The longitude difference
/// is wrapped into (-180, 180] first.
double haversine(LatLon a, LatLon b);

/// Mean absolute error. Throws DimensionError on empty or unequal inputs.
double mae(std::span<const double> preds, std::span<const double> truths);

/// Sample standard deviation (n - 1) of |truth - pred|. Needs n >= 2.
double error_sd(std::span<const double> preds, std::span<const double> truths);

/// 100 * (e_baseline - e_forecast) / e_baseline. Throws DomainError if e_baseline <= 0.
double skill(double e_baseline, double e_forecast);

/// Adds wrapped displacement to a start position.
LatLon advance(LatLon start, double dlat, double dlon);

struct EvalReport {
  std::string model;
  std::string basin;
  std::size_t case_count = 0;
  double mae = 0.0;
  double error_sd = 0.0;
  std::optional<double> skill;
  std::string baseline;
};

/// Track verification: forecasts[i] is aligned with cases[i]. Errors are
/// Haversine distances between predicted and true 24-h positions. Skill is
/// filled when `baseline` forecasts are given; otherwise a warning is logged.
EvalReport evaluate_track(std::span<const ForecastRecord> forecasts, std::span<const storm::ForecastCase> cases,
                          std::string model, std::string basin = "ALL",
                          std::optional<std::span<const ForecastRecord>> baseline = std::nullopt,
                          std::string baseline_name = {});

EvalReport evaluate_intensity(std::span<const ForecastRecord> forecasts, std::span<const storm::ForecastCase> cases,
                              std::string model, std::string basin = "ALL",
                              std::optional<std::span<const ForecastRecord>> baseline = std::nullopt,
                              std::string baseline_name = {});

/// Per-case Haversine errors in km.
std::vector<double> track_errors(std::span<const ForecastRecord> forecasts, std::span<const storm::ForecastCase> cases);

// ---------------------------------------------------------------------------
// Comparison tables
// ---------------------------------------------------------------------------

struct TableCell {
  double mae = 0.0;
  std::optional<double> skill;
  double error_sd = 0.0;
  std::size_t case_count = 0;
  bool best_mae = false;
  bool best_skill = false;
  bool best_sd = false;
};

struct ComparisonTable {
  std::string baseline;
  std::vector<std::string> basins;  // column groups, first-seen order
  std::vector<std::string> models;  // rows, first-seen order
  // cells[model][basin]; absent when a model has no report for a basin.
  std::vector<std::vector<std::optional<TableCell>>> cells;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Skill of every report is recomputed against the report named `baseline`
/// in the same basin. All models in one basin must share a case count.
ComparisonTable build_comparison_table(std::span<const EvalReport> reports, const std::string& baseline);

// ---------------------------------------------------------------------------
// Published-table fixtures
// ---------------------------------------------------------------------------

enum class Task { Track, Intensity };

struct FixtureRow {
  std::string table;  // e.g. "3"
  Task task = Task::Track;
  std::string basin;
  std::string model;
  std::size_t case_count = 0;
  double mae = 0.0;
  double reported_skill = 0.0;
  double error_sd = 0.0;
  std::string baseline;
  std::string provenance;
};

/// Columns: table,task,basin,model,cases,mae,skill,error_sd,baseline,provenance
std::vector<FixtureRow> load_fixture(const std::filesystem::path& path);

struct SkillCheck {
  FixtureRow row;
  double baseline_mae = 0.0;
  double computed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Track skills are published as integers (tolerance 0.55), intensity
/// skills to one decimal (tolerance 0.05).
double skill_tolerance(Task task);

/// Recomputes every non-baseline skill in the fixture from the published MAEs.
std::vector<SkillCheck> reproduce_skills(std::span<const FixtureRow> rows);

std::vector<EvalReport> fixture_reports(std::span<const FixtureRow> rows, const std::string& table);

}  // namespace hurricast::eval
