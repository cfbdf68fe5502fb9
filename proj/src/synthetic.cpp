#include "hurricast/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hurricast/errors.hpp"
#include "hurricast/eval.hpp"
#include "hurricast/forecast_io.hpp"

namespace hurricast::synthetic {

namespace {

constexpr int kGrid = 25;
constexpr int kChannels = 9;
constexpr double kVortexRadius = 4.0;  // pixels
constexpr double kPixelNoise = 0.1;
constexpr std::array<double, 3> kLevelWeight = {0.6, 0.8, 1.0};  // 225, 500, 700 hPa
constexpr std::array<double, 3> kLevelHeight = {10.0, 5.0, 3.0};

double round_to(double v, int decimals) {
  const double p = std::pow(10.0, decimals);
  return std::round(v * p) / p;
}

double wrap_lon(double lon) {
  while (lon > 180.0) lon -= 360.0;
  while (lon <= -180.0) lon += 360.0;
  return lon;
}

struct Latent {
  std::vector<double> stat;    // s_t read by the statistical source, index t + 8
  std::vector<double> vision;  // s_t read by the cubes
  std::vector<double> drive;   // combined series that moves the intensity
};

std::vector<double> ar1(int n, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> s(static_cast<std::size_t>(n));
  s[0] = nd(rng);
  const double k = std::sqrt(1.0 - rho * rho);
  for (int i = 1; i < n; ++i) s[static_cast<std::size_t>(i)] = rho * s[static_cast<std::size_t>(i - 1)] + k * nd(rng);
  return s;
}

Latent latent(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const int n = spec.steps + storm::kLeadSteps;
  Latent l;
  switch (spec.placement) {
    case SignalPlacement::Statistical:
      l.stat = ar1(n, spec.rho, rng);
      l.drive = l.stat;
      l.vision.assign(static_cast<std::size_t>(n), 0.0);
      break;
    case SignalPlacement::Vision:
      l.vision = ar1(n, spec.rho, rng);
      l.drive = l.vision;
      l.stat.assign(static_cast<std::size_t>(n), 0.0);
      break;
    case SignalPlacement::Both:
      l.stat = ar1(n, spec.rho, rng);
      l.vision = ar1(n, spec.rho, rng);
      l.drive.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        l.drive[static_cast<std::size_t>(i)] =
            (l.stat[static_cast<std::size_t>(i)] + l.vision[static_cast<std::size_t>(i)]) / std::numbers::sqrt2;
      }
      break;
  }
  return l;
}

void draw_slice(Tensor4f& cube, int t, double amplitude, double steer_u, double steer_v, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, kPixelNoise);
  const double c = (kGrid - 1) / 2.0;
  for (int level = 0; level < 3; ++level) {
    const double a = amplitude * kLevelWeight[static_cast<std::size_t>(level)];
    for (int y = 0; y < kGrid; ++y) {
      for (int x = 0; x < kGrid; ++x) {
        const double dx = x - c, dy = y - c;
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * kVortexRadius * kVortexRadius));
        const double z = kLevelHeight[static_cast<std::size_t>(level)] - a * g;
        const double u = steer_u - a * (dy / kVortexRadius) * g;
        const double v = steer_v + a * (dx / kVortexRadius) * g;
        cube(t, 3 * 0 + level, y, x) = static_cast<float>(z + nd(rng));
        cube(t, 3 * 1 + level, y, x) = static_cast<float>(u + nd(rng));
        cube(t, 3 * 2 + level, y, x) = static_cast<float>(v + nd(rng));
      }
    }
  }
}

TimePoint start_time(int year, int day_offset, int hour) {
  using namespace std::chrono;
  const sys_days d = year_month_day{std::chrono::year{year}, June, 1d};
  return TimePoint(duration_cast<seconds>(d.time_since_epoch())) + hours{24 * day_offset + hour};
}

storm::Basin pick_basin(double u) {
  if (u < 0.5) return storm::Basin::NA;
  if (u < 0.85) return storm::Basin::EP;
  return storm::Basin::WP;
}

}  // namespace

std::string_view label(SignalPlacement p) {
  switch (p) {
    case SignalPlacement::Statistical: return "statistical";
    case SignalPlacement::Vision: return "vision";
    case SignalPlacement::Both: return "both";
  }
  return "?";
}

SignalPlacement parse_placement(std::string_view s) {
  if (s == "statistical") return SignalPlacement::Statistical;
  if (s == "vision") return SignalPlacement::Vision;
  if (s == "both") return SignalPlacement::Both;
  throw ConfigError("unknown signal placement '" + std::string(s) + "' (admissible: statistical, vision, both)");
}

void SyntheticSpec::validate() const {
  if (storms < 1) throw ConfigError("synthetic spec needs at least one storm");
  if (steps < 24) throw ConfigError("synthetic storms need at least 24 steps, got " + std::to_string(steps));
  if (!(noise_sd >= 0.0)) throw ConfigError("noise sd must be >= 0");
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (first_year > last_year) throw ConfigError("first_year after last_year");
  if (operational_members < 0) throw ConfigError("operational member count must be >= 0");
  if (!(operational_wind_sd >= 0.0 && operational_track_sd >= 0.0)) throw ConfigError("operational sd must be >= 0");
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  SyntheticData out;
  out.intensity_noise_floor = spec.noise_sd * std::sqrt(2.0 / std::numbers::pi);
  const int years = spec.last_year - spec.first_year + 1;
  const int lag = storm::kLeadSteps;

  std::vector<double> member_bias(static_cast<std::size_t>(spec.operational_members));
  for (int m = 0; m < spec.operational_members; ++m) member_bias[static_cast<std::size_t>(m)] = m % 2 ? -1.0 : 1.5;

  for (int k = 0; k < spec.storms; ++k) {
    const int year = spec.first_year + k % years;
    char sid[32];
    std::snprintf(sid, sizeof sid, "%04dS%04d", year, k);

    storm::StormTrack track;
    Latent lat_series;
    std::vector<double> wind;
    // Redraw until the storm passes selection; with the default levels this
    // almost never loops.
    for (int attempt = 0;; ++attempt) {
      if (attempt > 100) throw NumericalError("synthetic: could not draw a storm passing selection");
      lat_series = latent(spec, rng);
      wind.assign(static_cast<std::size_t>(spec.steps), 0.0);
      for (int t = 0; t < spec.steps; ++t) {
        wind[static_cast<std::size_t>(t)] =
            65.0 + spec.signal * lat_series.drive[static_cast<std::size_t>(t)] + spec.noise_sd * nd(rng);
      }
      if (wind[0] >= 34.0 && *std::min_element(wind.begin(), wind.end()) > 0.0) break;
    }

    const storm::Basin basin = pick_basin(ud(rng));
    const bool ten_minute = basin == storm::Basin::WP;
    const TimePoint t_start = start_time(year, static_cast<int>(ud(rng) * 100.0), 3 * static_cast<int>(ud(rng) * 8.0));
    double lat = 10.0 + 12.0 * ud(rng);
    double lon = basin == storm::Basin::WP ? 130.0 + 30.0 * ud(rng) : -140.0 + 80.0 * ud(rng);
    double vlat = 0.05 + 0.2 * ud(rng);
    double vlon = -(0.1 + 0.5 * ud(rng));
    double land = 300.0 + 900.0 * ud(rng);

    Tensor4f cube(Tensor4f::Dims{spec.steps, kChannels, kGrid, kGrid});
    track.storm_id = sid;
    for (int t = 0; t < spec.steps; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      const auto li = static_cast<std::size_t>(t + lag);  // latent value at time t
      if (t > 0) {
        vlat += 0.02 * nd(rng);
        vlon += 0.02 * nd(rng);
        lat += vlat;
        lon = wrap_lon(lon + vlon);
        land = std::max(0.0, land - 10.0 + 15.0 * nd(rng));
      }
      storm::RawStormRecord r;
      r.storm_id = sid;
      r.time = t_start + hours{3 * t};
      r.lat = round_to(lat, 4);
      r.lon = round_to(lon, 4);
      const double w = wind[ti];
      r.wmo_wind = round_to(ten_minute ? w * 0.93 : w, 4);
      double pressure = 1010.0 - 0.8 * (w - 34.0);
      if (spec.placement != SignalPlacement::Vision) pressure = 1000.0 - 10.0 * lat_series.stat[li];
      r.wmo_pressure = round_to(pressure, 4);
      r.dist_to_land = round_to(land, 2);
      const double km_per_step = std::hypot(vlat, vlon * std::cos(lat * std::numbers::pi / 180.0)) * 111.195;
      r.storm_speed = round_to(km_per_step / 3.0 / 1.852, 3);
      double dir = std::atan2(vlon * std::cos(lat * std::numbers::pi / 180.0), vlat) * 180.0 / std::numbers::pi;
      if (dir < 0) dir += 360.0;
      r.storm_dir = round_to(dir, 3);
      r.nature = storm::Nature::TS;
      r.basin = basin;
      r.wind_avg_period = ten_minute ? storm::WindAveraging::TenMinute : storm::WindAveraging::OneMinute;
      track.records.push_back(r);

      const double amplitude = spec.placement == SignalPlacement::Statistical
                                   ? 1.0 + 0.25 * (w - 65.0) / std::max(spec.signal, 1e-9)
                                   : 1.0 + 0.25 * lat_series.vision[li];
      draw_slice(cube, t, amplitude, 2.0 * vlon, 2.0 * vlat, rng);
    }
    if (!storm::passes_selection(track)) throw NumericalError("synthetic storm " + track.storm_id + " fails selection");

    // Operational forecasts for every case position.
    const auto& recs = track.records;
    for (int i = storm::kHistorySteps - 1; i + lag < spec.steps; ++i) {
      const auto& now = recs[static_cast<std::size_t>(i)];
      const auto& fut = recs[static_cast<std::size_t>(i + lag)];
      const double true_wind = storm::adjust_wind_averaging(*fut.wmo_wind, fut.wind_avg_period);
      double dlon = fut.lon - now.lon;
      if (dlon > 180.0) dlon -= 360.0;
      if (dlon <= -180.0) dlon += 360.0;
      for (int m = 0; m < spec.operational_members; ++m) {
        ForecastRecord f;
        f.model_id = "OP" + std::string(1, static_cast<char>('A' + m));
        f.storm_id = sid;
        f.t0 = now.time;
        f.wind = true_wind + member_bias[static_cast<std::size_t>(m)] + spec.operational_wind_sd * nd(rng);
        f.dlat = (fut.lat - now.lat) + spec.operational_track_sd * nd(rng);
        f.dlon = dlon + spec.operational_track_sd * nd(rng);
        const auto p = eval::advance({now.lat, now.lon}, f.dlat, f.dlon);
        f.lat = p.lat;
        f.lon = p.lon;
        out.operational.push_back(f);
      }
    }
    out.cubes.insert(sid, recs.back().time, std::move(cube));
    out.tracks.push_back(std::move(track));
  }
  return out;
}

std::string manifest(const SyntheticData& data, const SyntheticSpec& spec) {
  std::ostringstream os;
  os << "seed=" << spec.seed << "\n"
     << "storms=" << spec.storms << "\n"
     << "steps=" << spec.steps << "\n"
     << "placement=" << label(spec.placement) << "\n"
     << "noise_sd=" << format_exact(spec.noise_sd) << "\n"
     << "signal=" << format_exact(spec.signal) << "\n"
     << "rho=" << format_exact(spec.rho) << "\n"
     << "operational_members=" << spec.operational_members << "\n"
     << "intensity_target=65 + signal * s(t0) + noise_sd * N(0,1)\n"
     << "intensity_noise_floor_kt=" << format_exact(data.intensity_noise_floor) << "\n";
  return os.str();
}

void write(const SyntheticData& data, const SyntheticSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string prov = "generated-by=hurricast synth, seed=" + std::to_string(spec.seed);
  storm::write_track_csv(dir / "tracks.csv", data.tracks, prov);
  data.cubes.save_directory(dir / "cubes");
  const std::vector<std::string> comment{prov};
  write_operational_csv(dir / "operational.csv", data.operational, comment);
  std::ofstream m(dir / "manifest.txt");
  if (!m) throw std::runtime_error("cannot write " + (dir / "manifest.txt").string());
  m << manifest(data, spec);
}

}  // namespace hurricast::synthetic
