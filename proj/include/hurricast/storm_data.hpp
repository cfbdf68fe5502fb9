#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hurricast/datetime.hpp"

namespace hurricast {

class CubeStore;

namespace storm {

enum class Nature { DS, TS, ET, SS, NR, MX };
enum class Basin { NA, EP, WP, NI, SI, SP, SA };
enum class WindAveraging { OneMinute, TenMinute };

inline constexpr std::array<std::string_view, 6> kNatureLabels = {"DS", "TS", "ET", "SS", "NR", "MX"};
inline constexpr std::array<std::string_view, 7> kBasinLabels = {"NA", "EP", "WP", "NI", "SI", "SP", "SA"};

/// Throws DomainError listing the admissible labels.
Nature parse_nature(std::string_view label);
Basin parse_basin(std::string_view label);
WindAveraging parse_wind_averaging(std::string_view label);
std::string_view label(Nature n);
std::string_view label(Basin b);
std::string_view label(WindAveraging w);

struct RawStormRecord {
  std::string storm_id;
  TimePoint time;
  double lat = 0.0;  // degrees north
  double lon = 0.0;  // degrees east
  std::optional<double> wmo_wind;      // knots
  std::optional<double> wmo_pressure;  // mb
  double dist_to_land = 0.0;           // km
  double storm_speed = 0.0;            // kt
  double storm_dir = 0.0;              // degrees east of north
  Nature nature = Nature::TS;
  Basin basin = Basin::NA;
  WindAveraging wind_avg_period = WindAveraging::OneMinute;
};

/// Time-ordered records of a single storm.
struct StormTrack {
  std::string storm_id;
  std::vector<RawStormRecord> records;

  std::size_t size() const { return records.size(); }
};

// ---------------------------------------------------------------------------
// Track CSV ingestion
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTrackCsvHeader =
    "sid,iso_time,lat,lon,wmo_wind,wmo_pres,dist2land,storm_speed,storm_dir,nature,basin,wind_avg_period";

struct RowDiagnostic {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string message;
};

struct ParseResult {
  std::vector<StormTrack> tracks;
  std::vector<RowDiagnostic> rejected;
};

/// Parses a track CSV. Tracks come back ordered by first appearance of their
/// sid, records time-sorted. A malformed header throws FormatError; bad rows
/// are skipped and reported.
ParseResult parse_track_csv(const std::filesystem::path& path);
ParseResult parse_track_csv_text(std::string_view text);

void write_track_csv(const std::filesystem::path& path, std::span<const StormTrack> tracks,
                     std::string_view provenance = {});

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Divides 10-minute sustained winds by 0.93. Throws DomainError on negative wind.
double adjust_wind_averaging(double wind, WindAveraging period);

/// Brings a track to 3-hour cadence. 6-hourly input gets linearly
/// interpolated midpoints (positions included); interior gaps in wind and
/// pressure of 3-hourly input are filled linearly. Leading or trailing
/// missing values are left missing. Irregular spacing throws FormatError.
StormTrack interpolate_to_3h(const StormTrack& track);

/// Converts all winds to 1-minute averaging.
StormTrack to_one_minute_winds(const StormTrack& track);

/// Storms whose max wind reaches 34 kt and that have more than 60 h of records
/// after first reaching it.
std::vector<StormTrack> select_storms(std::span<const StormTrack> tracks);
bool passes_selection(const StormTrack& track);

// ---------------------------------------------------------------------------
// Feature encoding
// ---------------------------------------------------------------------------

enum class ColumnKind { Scaled, Cyclical, OneHot };

/// Column layout of the per-step statistical vector.
///
/// Canonical order (27 columns): lat_cos, lat_sin, lon_cos, lon_sin, date_cos,
/// date_sin, dir_cos, dir_sin, wind_1min, pressure, dist_to_land, storm_speed,
/// disp_lat, disp_lon, basin one-hot x7, nature one-hot x6. With
/// `include_raw_position` the raw lat and lon are appended as two further
/// scaled columns.
class FeatureLayout {
 public:
  explicit FeatureLayout(bool include_raw_position = false);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<ColumnKind>& kinds() const { return kinds_; }
  bool include_raw_position() const { return include_raw_position_; }
  std::vector<bool> scaled_mask() const;

  static constexpr std::size_t kBasinOffset = 14;
  static constexpr std::size_t kNatureOffset = 21;

 private:
  bool include_raw_position_;
  std::vector<std::string> names_;
  std::vector<ColumnKind> kinds_;
};

/// Encodes one record. `prev` is the record one step (3 h) earlier; passing
/// the record itself yields zero displacement.
Eigen::VectorXd encode_features(const RawStormRecord& record, const RawStormRecord& prev,
                                const FeatureLayout& layout = FeatureLayout());

/// Per-column standardization fitted on training rows only.
class Scaler {
 public:
  Scaler() = default;

  /// Columns with mask=false pass through. Constant columns get std 1.
  static Scaler fit(const Eigen::MatrixXd& rows, const std::vector<bool>& scaled_mask);
  static Scaler fit(const Eigen::MatrixXd& rows);
  static Scaler from_parts(Eigen::VectorXd mean, Eigen::VectorXd stddev);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
  Eigen::VectorXd apply_row(const Eigen::VectorXd& row) const;

  bool fitted() const { return fitted_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& stddev() const { return std_; }

 private:
  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::VectorXd std_;
};

// ---------------------------------------------------------------------------
// Cases
// ---------------------------------------------------------------------------

inline constexpr int kHistorySteps = 8;
inline constexpr int kLeadSteps = 8;  // 24 h at 3-h cadence

enum class Provenance { Unassigned, Train, Validation, Test, Excluded };
std::string_view label(Provenance p);

struct ForecastCase {
  std::string storm_id;
  TimePoint t0;
  Eigen::MatrixXd history_stat;  // kHistorySteps x S, oldest first, unscaled
  double lat0 = 0.0;
  double lon0 = 0.0;
  double wind0 = 0.0;
  double target_intensity = 0.0;  // kt at t0 + 24 h
  double target_dlat = 0.0;
  double target_dlon = 0.0;
  Basin basin = Basin::NA;
  Provenance provenance = Provenance::Unassigned;

  /// "<sid>@<iso_t0>"
  std::string id() const;
  TimePoint history_time(int step) const { return t0 - hours{3 * (kHistorySteps - 1 - step)}; }
};

struct BuildStats {
  std::size_t emitted = 0;
  std::size_t skipped_missing_cube = 0;
  std::size_t skipped_missing_value = 0;
};

/// Slides an 8-step history window along the track and emits one case per
/// position that also has a record 24 h ahead. When `cubes` is given, windows
/// lacking a cube slice are skipped and counted.
std::vector<ForecastCase> build_cases(const StormTrack& track, const CubeStore* cubes, BuildStats& stats,
                                      const FeatureLayout& layout = FeatureLayout());

struct SplitYears {
  int train_first = 1980;
  int train_last = 2011;
  int validation_first = 2012;
  int validation_last = 2015;
  int test_first = 2016;
  int test_last = 2019;
};

struct CaseSplit {
  std::vector<ForecastCase> train;
  std::vector<ForecastCase> validation;
  std::vector<ForecastCase> test;
  std::vector<ForecastCase> excluded;
};

/// Partitions cases by the year of t0 and tags each with its provenance.
CaseSplit split_by_year(std::vector<ForecastCase> cases, const SplitYears& years = {});

/// Case store: "HCAS", u16 version, u8 raw-position flag, u32 count, then
/// per case its id fields, provenance, basin, scalars and the history block.
inline constexpr std::uint16_t kCaseStoreVersion = 1;
void save_cases(const std::filesystem::path& path, std::span<const ForecastCase> cases, const FeatureLayout& layout);
std::vector<ForecastCase> load_cases(const std::filesystem::path& path, FeatureLayout* layout = nullptr);

}  // namespace storm
}  // namespace hurricast
