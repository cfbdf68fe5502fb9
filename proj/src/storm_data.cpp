#include "hurricast/storm_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hurricast/cube_store.hpp"
#include "hurricast/errors.hpp"

namespace hurricast::storm {

namespace {

template <std::size_t N>
std::string admissible(const std::array<std::string_view, N>& labels) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ", ";
    s += labels[i];
  }
  return s;
}

template <std::size_t N>
std::size_t find_label(const std::array<std::string_view, N>& labels, std::string_view v, const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (labels[i] == v) return i;
  }
  throw DomainError("unknown " + std::string(what) + " '" + std::string(v) + "' (admissible: " + admissible(labels) +
                    ")");
}

double wrap_longitude_delta(double d) {
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

double parse_number(std::string_view field, const char* name) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size() || !std::isfinite(v)) {
    throw FormatError(std::string(name) + " is not a number: '" + std::string(field) + "'");
  }
  return v;
}

std::optional<double> parse_optional(std::string_view field, const char* name) {
  if (field.empty()) return std::nullopt;
  return parse_number(field, name);
}

void require_range(double v, double lo, double hi, const char* name) {
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << name << "=" << v << " outside [" << lo << ", " << hi << "]";
    throw FormatError(os.str());
  }
}

}  // namespace

Nature parse_nature(std::string_view v) { return static_cast<Nature>(find_label(kNatureLabels, v, "nature")); }
Basin parse_basin(std::string_view v) { return static_cast<Basin>(find_label(kBasinLabels, v, "basin")); }

WindAveraging parse_wind_averaging(std::string_view v) {
  if (v == "1min") return WindAveraging::OneMinute;
  if (v == "10min") return WindAveraging::TenMinute;
  throw DomainError("unknown wind_avg_period '" + std::string(v) + "' (admissible: 1min, 10min)");
}

std::string_view label(Nature n) { return kNatureLabels[static_cast<std::size_t>(n)]; }
std::string_view label(Basin b) { return kBasinLabels[static_cast<std::size_t>(b)]; }
std::string_view label(WindAveraging w) { return w == WindAveraging::OneMinute ? "1min" : "10min"; }

std::string_view label(Provenance p) {
  switch (p) {
    case Provenance::Train: return "train";
    case Provenance::Validation: return "validation";
    case Provenance::Test: return "test";
    case Provenance::Excluded: return "excluded";
    default: return "unassigned";
  }
}

// ---------------------------------------------------------------------------

ParseResult parse_track_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open track file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_track_csv_text(ss.str());
}

ParseResult parse_track_csv_text(std::string_view text) {
  ParseResult result;
  struct Pending {
    RawStormRecord rec;
    std::size_t line;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Pending>> by_sid;

  std::size_t line_no = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;

    if (!have_header) {
      if (line != kTrackCsvHeader) {
        throw FormatError("line " + std::to_string(line_no) + ": bad track header '" + std::string(line) +
                          "', expected '" + std::string(kTrackCsvHeader) + "'");
      }
      have_header = true;
      continue;
    }

    try {
      auto f = split_commas(line);
      if (f.size() != 12) throw FormatError("expected 12 fields, got " + std::to_string(f.size()));
      RawStormRecord r;
      r.storm_id = std::string(f[0]);
      if (r.storm_id.empty()) throw FormatError("empty sid");
      r.time = parse_iso8601(f[1]);
      r.lat = parse_number(f[2], "lat");
      r.lon = parse_number(f[3], "lon");
      require_range(r.lat, -90.0, 90.0, "lat");
      require_range(r.lon, -180.0, 180.0, "lon");
      r.wmo_wind = parse_optional(f[4], "wmo_wind");
      r.wmo_pressure = parse_optional(f[5], "wmo_pres");
      if (r.wmo_wind && *r.wmo_wind < 0) throw FormatError("negative wmo_wind");
      r.dist_to_land = parse_number(f[6], "dist2land");
      r.storm_speed = parse_number(f[7], "storm_speed");
      r.storm_dir = parse_number(f[8], "storm_dir");
      if (r.dist_to_land < 0) throw FormatError("negative dist2land");
      if (r.storm_speed < 0) throw FormatError("negative storm_speed");
      if (r.storm_dir < 0 || r.storm_dir >= 360) throw FormatError("storm_dir outside [0, 360)");
      r.nature = parse_nature(f[9]);
      r.basin = parse_basin(f[10]);
      r.wind_avg_period = parse_wind_averaging(f[11]);
      auto [it, inserted] = by_sid.try_emplace(r.storm_id);
      if (inserted) order.push_back(r.storm_id);
      it->second.push_back({std::move(r), line_no});
    } catch (const std::exception& e) {
      result.rejected.push_back({line_no, "line " + std::to_string(line_no) + ": " + e.what()});
    }
  }
  if (!have_header) throw FormatError("missing track header");

  for (const auto& sid : order) {
    auto& rows = by_sid[sid];
    std::stable_sort(rows.begin(), rows.end(), [](const Pending& a, const Pending& b) { return a.rec.time < b.rec.time; });
    StormTrack track{sid, {}};
    for (auto& p : rows) {
      if (!track.records.empty() && track.records.back().time == p.rec.time) {
        result.rejected.push_back(
            {p.line, "line " + std::to_string(p.line) + ": duplicate timestamp " + format_iso8601(p.rec.time)});
        continue;
      }
      track.records.push_back(std::move(p.rec));
    }
    result.tracks.push_back(std::move(track));
  }
  return result;
}

void write_track_csv(const std::filesystem::path& path, std::span<const StormTrack> tracks,
                     std::string_view provenance) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!provenance.empty()) out << "# " << provenance << "\n";
  out << kTrackCsvHeader << "\n";
  char buf[512];
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", *v);
    return std::string(b);
  };
  for (const auto& t : tracks) {
    for (const auto& r : t.records) {
      std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%s,%s,%.2f,%.3f,%.3f,%s,%s,%s\n", r.storm_id.c_str(),
                    format_iso8601(r.time).c_str(), r.lat, r.lon, opt(r.wmo_wind).c_str(),
                    opt(r.wmo_pressure).c_str(), r.dist_to_land, r.storm_speed, r.storm_dir,
                    std::string(label(r.nature)).c_str(), std::string(label(r.basin)).c_str(),
                    std::string(label(r.wind_avg_period)).c_str());
      out << buf;
    }
  }
}

// ---------------------------------------------------------------------------

double adjust_wind_averaging(double wind, WindAveraging period) {
  if (wind < 0 || std::isnan(wind)) throw DomainError("wind must be non-negative, got " + std::to_string(wind));
  return period == WindAveraging::TenMinute ? wind / 0.93 : wind;
}

namespace {

RawStormRecord midpoint(const RawStormRecord& a, const RawStormRecord& b) {
  RawStormRecord m = a;
  m.time = a.time + (b.time - a.time) / 2;
  m.lat = 0.5 * (a.lat + b.lat);
  double lon = a.lon + 0.5 * wrap_longitude_delta(b.lon - a.lon);
  if (lon > 180.0) lon -= 360.0;
  if (lon < -180.0) lon += 360.0;
  m.lon = lon;
  m.dist_to_land = 0.5 * (a.dist_to_land + b.dist_to_land);
  m.storm_speed = 0.5 * (a.storm_speed + b.storm_speed);
  const double rad = std::numbers::pi / 180.0;
  double dir = std::atan2(std::sin(a.storm_dir * rad) + std::sin(b.storm_dir * rad),
                          std::cos(a.storm_dir * rad) + std::cos(b.storm_dir * rad)) /
               rad;
  if (dir < 0) dir += 360.0;
  if (dir >= 360.0) dir -= 360.0;
  m.storm_dir = dir;
  m.wmo_wind.reset();
  m.wmo_pressure.reset();
  return m;
}

// Linear fill of interior gaps, by time.
void fill_gaps(std::vector<RawStormRecord>& recs, std::optional<double> RawStormRecord::*field) {
  const std::size_t n = recs.size();
  std::size_t prev = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(recs[i].*field)) continue;
    if (prev != n && i > prev + 1) {
      double t0 = static_cast<double>(recs[prev].time.time_since_epoch().count());
      double t1 = static_cast<double>(recs[i].time.time_since_epoch().count());
      double v0 = *(recs[prev].*field), v1 = *(recs[i].*field);
      for (std::size_t k = prev + 1; k < i; ++k) {
        double t = static_cast<double>(recs[k].time.time_since_epoch().count());
        double w = (t - t0) / (t1 - t0);
        recs[k].*field = v0 + w * (v1 - v0);
      }
    }
    prev = i;
  }
}

}  // namespace

StormTrack interpolate_to_3h(const StormTrack& track) {
  StormTrack out{track.storm_id, {}};
  if (track.records.empty()) return out;
  out.records.reserve(track.records.size() * 2);
  out.records.push_back(track.records.front());
  for (std::size_t i = 1; i < track.records.size(); ++i) {
    const auto& a = track.records[i - 1];
    const auto& b = track.records[i];
    auto gap = b.time - a.time;
    if (gap == hours{6}) {
      out.records.push_back(midpoint(a, b));
    } else if (gap != hours{3}) {
      throw FormatError("storm " + track.storm_id + ": irregular cadence between " + format_iso8601(a.time) + " and " +
                        format_iso8601(b.time));
    }
    out.records.push_back(b);
  }
  fill_gaps(out.records, &RawStormRecord::wmo_wind);
  fill_gaps(out.records, &RawStormRecord::wmo_pressure);
  return out;
}

StormTrack to_one_minute_winds(const StormTrack& track) {
  StormTrack out = track;
  for (auto& r : out.records) {
    if (r.wmo_wind) r.wmo_wind = adjust_wind_averaging(*r.wmo_wind, r.wind_avg_period);
    r.wind_avg_period = WindAveraging::OneMinute;
  }
  return out;
}

bool passes_selection(const StormTrack& track) {
  const auto& recs = track.records;
  auto first = std::find_if(recs.begin(), recs.end(), [](const RawStormRecord& r) {
    return r.wmo_wind && *r.wmo_wind >= 34.0;
  });
  if (first == recs.end()) return false;
  return recs.back().time - first->time > hours{60};
}

std::vector<StormTrack> select_storms(std::span<const StormTrack> tracks) {
  std::vector<StormTrack> out;
  for (const auto& t : tracks) {
    if (passes_selection(t)) out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureLayout::FeatureLayout(bool include_raw_position) : include_raw_position_(include_raw_position) {
  auto add = [this](std::string name, ColumnKind kind) {
    names_.push_back(std::move(name));
    kinds_.push_back(kind);
  };
  for (const char* n : {"lat", "lon", "date", "dir"}) {
    add(std::string(n) + "_cos", ColumnKind::Cyclical);
    add(std::string(n) + "_sin", ColumnKind::Cyclical);
  }
  for (const char* n : {"wind_1min", "pressure", "dist_to_land", "storm_speed", "disp_lat", "disp_lon"}) {
    add(n, ColumnKind::Scaled);
  }
  for (auto b : kBasinLabels) add("basin_" + std::string(b), ColumnKind::OneHot);
  for (auto n : kNatureLabels) add("nature_" + std::string(n), ColumnKind::OneHot);
  if (include_raw_position_) {
    add("lat", ColumnKind::Scaled);
    add("lon", ColumnKind::Scaled);
  }
}

std::vector<bool> FeatureLayout::scaled_mask() const {
  std::vector<bool> m(kinds_.size());
  for (std::size_t i = 0; i < kinds_.size(); ++i) m[i] = kinds_[i] == ColumnKind::Scaled;
  return m;
}

Eigen::VectorXd encode_features(const RawStormRecord& r, const RawStormRecord& prev, const FeatureLayout& layout) {
  if (!r.wmo_wind || !r.wmo_pressure) {
    throw DomainError("storm " + r.storm_id + " at " + format_iso8601(r.time) + ": missing wind or pressure");
  }
  const double pi = std::numbers::pi;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.size()));
  v[0] = std::cos(pi * r.lat / 180.0);
  v[1] = std::sin(pi * r.lat / 180.0);
  v[2] = std::cos(pi * r.lon / 180.0);
  v[3] = std::sin(pi * r.lon / 180.0);
  // Fractional day of year over a 365-day cycle; Dec 31 of leap years wraps onto Jan 1.
  auto day_start = std::chrono::floor<std::chrono::days>(r.time);
  double frac_day = (day_of_year(r.time) - 1) + std::chrono::duration<double, std::ratio<86400>>(r.time - day_start).count();
  v[4] = std::cos(2.0 * pi * frac_day / 365.0);
  v[5] = std::sin(2.0 * pi * frac_day / 365.0);
  v[6] = std::cos(pi * r.storm_dir / 180.0);
  v[7] = std::sin(pi * r.storm_dir / 180.0);
  v[8] = adjust_wind_averaging(*r.wmo_wind, r.wind_avg_period);
  v[9] = *r.wmo_pressure;
  v[10] = r.dist_to_land;
  v[11] = r.storm_speed;
  v[12] = r.lat - prev.lat;
  v[13] = wrap_longitude_delta(r.lon - prev.lon);
  v[FeatureLayout::kBasinOffset + static_cast<int>(r.basin)] = 1.0;
  v[FeatureLayout::kNatureOffset + static_cast<int>(r.nature)] = 1.0;
  if (layout.include_raw_position()) {
    v[27] = r.lat;
    v[28] = r.lon;
  }
  return v;
}

// ---------------------------------------------------------------------------

Scaler Scaler::fit(const Eigen::MatrixXd& rows, const std::vector<bool>& scaled_mask) {
  if (static_cast<Eigen::Index>(scaled_mask.size()) != rows.cols()) {
    throw DimensionError("scaler mask has " + std::to_string(scaled_mask.size()) + " entries for " +
                         std::to_string(rows.cols()) + " columns");
  }
  if (rows.rows() == 0) throw DimensionError("cannot fit scaler on zero rows");
  Scaler s;
  s.mean_ = Eigen::VectorXd::Zero(rows.cols());
  s.std_ = Eigen::VectorXd::Ones(rows.cols());
  for (Eigen::Index c = 0; c < rows.cols(); ++c) {
    if (!scaled_mask[static_cast<std::size_t>(c)]) continue;
    double mu = rows.col(c).mean();
    double sd = std::sqrt((rows.col(c).array() - mu).square().mean());
    if (sd > 1e-12 * std::max(1.0, std::abs(mu))) {
      s.mean_[c] = mu;
      s.std_[c] = sd;
    }
  }
  s.fitted_ = true;
  return s;
}

Scaler Scaler::fit(const Eigen::MatrixXd& rows) {
  return fit(rows, std::vector<bool>(static_cast<std::size_t>(rows.cols()), true));
}

Scaler Scaler::from_parts(Eigen::VectorXd mean, Eigen::VectorXd stddev) {
  if (mean.size() != stddev.size()) throw DimensionError("scaler mean/std length mismatch");
  Scaler s;
  s.mean_ = std::move(mean);
  s.std_ = std::move(stddev);
  s.fitted_ = true;
  return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& rows) const {
  if (!fitted_) throw StateError("scaler applied before fit");
  if (rows.cols() != mean_.size()) {
    throw DimensionError("scaler fitted on " + std::to_string(mean_.size()) + " columns, got " +
                         std::to_string(rows.cols()));
  }
  return ((rows.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array()).matrix();
}

Eigen::VectorXd Scaler::apply_row(const Eigen::VectorXd& row) const {
  if (!fitted_) throw StateError("scaler applied before fit");
  if (row.size() != mean_.size()) throw DimensionError("scaler row length mismatch");
  return ((row - mean_).array() / std_.array()).matrix();
}

// ---------------------------------------------------------------------------

std::string ForecastCase::id() const { return storm_id + "@" + format_iso8601(t0); }

std::vector<ForecastCase> build_cases(const StormTrack& track, const CubeStore* cubes, BuildStats& stats,
                                      const FeatureLayout& layout) {
  std::vector<ForecastCase> out;
  const auto& recs = track.records;
  const int n = static_cast<int>(recs.size());
  const int S = static_cast<int>(layout.size());
  for (int i = kHistorySteps - 1; i + kLeadSteps < n; ++i) {
    const auto& target = recs[static_cast<std::size_t>(i + kLeadSteps)];
    bool complete = target.wmo_wind.has_value();
    for (int j = i - kHistorySteps + 1; j <= i && complete; ++j) {
      const auto& r = recs[static_cast<std::size_t>(j)];
      complete = r.wmo_wind.has_value() && r.wmo_pressure.has_value();
    }
    if (!complete) {
      ++stats.skipped_missing_value;
      continue;
    }
    if (cubes) {
      bool have_all = true;
      for (int j = i - kHistorySteps + 1; j <= i && have_all; ++j) {
        have_all = cubes->has(track.storm_id, recs[static_cast<std::size_t>(j)].time);
      }
      if (!have_all) {
        ++stats.skipped_missing_cube;
        continue;
      }
    }
    ForecastCase c;
    const auto& now = recs[static_cast<std::size_t>(i)];
    c.storm_id = track.storm_id;
    c.t0 = now.time;
    c.history_stat.resize(kHistorySteps, S);
    for (int k = 0; k < kHistorySteps; ++k) {
      int j = i - kHistorySteps + 1 + k;
      const auto& r = recs[static_cast<std::size_t>(j)];
      const auto& p = j > 0 ? recs[static_cast<std::size_t>(j - 1)] : r;
      c.history_stat.row(k) = encode_features(r, p, layout).transpose();
    }
    c.lat0 = now.lat;
    c.lon0 = now.lon;
    c.wind0 = adjust_wind_averaging(*now.wmo_wind, now.wind_avg_period);
    c.target_intensity = adjust_wind_averaging(*target.wmo_wind, target.wind_avg_period);
    c.target_dlat = target.lat - now.lat;
    c.target_dlon = wrap_longitude_delta(target.lon - now.lon);
    c.basin = now.basin;
    out.push_back(std::move(c));
    ++stats.emitted;
  }
  return out;
}

CaseSplit split_by_year(std::vector<ForecastCase> cases, const SplitYears& y) {
  CaseSplit s;
  for (auto& c : cases) {
    int year = year_of(c.t0);
    if (year >= y.train_first && year <= y.train_last) {
      c.provenance = Provenance::Train;
      s.train.push_back(std::move(c));
    } else if (year >= y.validation_first && year <= y.validation_last) {
      c.provenance = Provenance::Validation;
      s.validation.push_back(std::move(c));
    } else if (year >= y.test_first && year <= y.test_last) {
      c.provenance = Provenance::Test;
      s.test.push_back(std::move(c));
    } else {
      c.provenance = Provenance::Excluded;
      s.excluded.push_back(std::move(c));
    }
  }
  return s;
}

}  // namespace hurricast::storm
