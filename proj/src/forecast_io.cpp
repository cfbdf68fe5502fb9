#include "hurricast/forecast_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hurricast/errors.hpp"

namespace hurricast {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

void row(std::ostream& os, const ForecastRecord& r) {
  os << r.storm_id << ',' << format_iso8601(r.t0) << ',' << format_exact(r.wind) << ',' << format_exact(r.dlat) << ','
     << format_exact(r.dlon) << ',' << format_exact(r.lat) << ',' << format_exact(r.lon) << '\n';
}

template <typename OnRow>
void read_rows(const std::filesystem::path& path, std::string_view header, OnRow&& on_row) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::size_t n = 0;
  bool have_header = false;
  while (std::getline(f, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      on_row(n, line, true);
      continue;
    }
    if (!have_header) {
      if (line != header) throw FormatError(path.string() + ": expected header '" + std::string(header) + "'");
      have_header = true;
      continue;
    }
    on_row(n, line, false);
  }
  if (!have_header) throw FormatError(path.string() + ": missing header");
}

ForecastRecord parse(const std::vector<std::string>& f, std::size_t off, const std::filesystem::path& path,
                     std::size_t n) {
  ForecastRecord r;
  r.storm_id = f[off];
  r.t0 = parse_iso8601(f[off + 1]);
  r.wind = number(f[off + 2], path, n);
  r.dlat = number(f[off + 3], path, n);
  r.dlon = number(f[off + 4], path, n);
  r.lat = number(f[off + 5], path, n);
  r.lon = number(f[off + 6], path, n);
  return r;
}

}  // namespace

std::string format_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_forecast_csv(const std::filesystem::path& path, std::span<const ForecastRecord> records,
                        std::span<const std::string> comment) {
  auto f = open_out(path);
  for (const auto& c : comment) f << "# " << c << '\n';
  if (!records.empty()) f << "# model=" << records.front().model_id << '\n';
  f << kForecastCsvHeader << '\n';
  for (const auto& r : records) row(f, r);
}

std::vector<ForecastRecord> read_forecast_csv(const std::filesystem::path& path) {
  std::string model = path.stem().string();
  std::vector<ForecastRecord> out;
  read_rows(path, kForecastCsvHeader, [&](std::size_t n, const std::string& line, bool comment) {
    if (comment) {
      if (line.rfind("# model=", 0) == 0) model = line.substr(8);
      return;
    }
    const auto f = split(line);
    if (f.size() != 7) throw FormatError(path.string() + ":" + std::to_string(n) + ": expected 7 fields");
    out.push_back(parse(f, 0, path, n));
  });
  for (auto& r : out) r.model_id = model;
  return out;
}

void write_operational_csv(const std::filesystem::path& path, std::span<const ForecastRecord> records,
                           std::span<const std::string> comment) {
  auto f = open_out(path);
  for (const auto& c : comment) f << "# " << c << '\n';
  f << kOperationalCsvHeader << '\n';
  for (const auto& r : records) {
    f << r.model_id << ',';
    row(f, r);
  }
}

std::vector<ForecastRecord> read_operational_csv(const std::filesystem::path& path) {
  std::vector<ForecastRecord> out;
  read_rows(path, kOperationalCsvHeader, [&](std::size_t n, const std::string& line, bool comment) {
    if (comment) return;
    const auto f = split(line);
    if (f.size() != 8) throw FormatError(path.string() + ":" + std::to_string(n) + ": expected 8 fields");
    auto r = parse(f, 1, path, n);
    r.model_id = f[0];
    out.push_back(std::move(r));
  });
  return out;
}

}  // namespace hurricast
