#include "hurricast/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "hurricast/errors.hpp"

namespace hurricast::eval {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_delta(double d) {
  d = std::fmod(d, 360.0);
  if (d > 180.0) d -= 360.0;
  if (d <= -180.0) d += 360.0;
  return d;
}

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("prediction/truth length mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
  if (a.empty()) throw DimensionError("metric over zero cases");
}

}  // namespace

double haversine(LatLon a, LatLon b) {
  const double phi1 = a.lat * kDeg, phi2 = b.lat * kDeg;
  const double dphi = (b.lat - a.lat) * kDeg;
  const double dlambda = wrap_delta(b.lon - a.lon) * kDeg;
  const double s1 = std::sin(dphi / 2), s2 = std::sin(dlambda / 2);
  double alpha = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  alpha = std::clamp(alpha, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(alpha));
}

double mae(std::span<const double> preds, std::span<const double> truths) {
  check_pair(preds, truths);
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(truths[i] - preds[i]);
  return s / static_cast<double>(preds.size());
}

double error_sd(std::span<const double> preds, std::span<const double> truths) {
  check_pair(preds, truths);
  if (preds.size() < 2) throw DimensionError("error sd needs at least two cases");
  const double m = mae(preds, truths);
  double ss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double d = std::abs(truths[i] - preds[i]) - m;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(preds.size() - 1));
}

double skill(double e_baseline, double e_forecast) {
  if (!(e_baseline > 0.0)) throw DomainError("skill baseline error must be positive");
  return 100.0 * (e_baseline - e_forecast) / e_baseline;
}

LatLon advance(LatLon start, double dlat, double dlon) {
  double lon = start.lon + dlon;
  while (lon > 180.0) lon -= 360.0;
  while (lon <= -180.0) lon += 360.0;
  return {std::clamp(start.lat + dlat, -90.0, 90.0), lon};
}

std::vector<double> track_errors(std::span<const ForecastRecord> forecasts,
                                 std::span<const storm::ForecastCase> cases) {
  if (forecasts.size() != cases.size()) {
    throw DimensionError("forecasts (" + std::to_string(forecasts.size()) + ") not aligned with cases (" +
                         std::to_string(cases.size()) + ")");
  }
  std::vector<double> err(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    LatLon truth = advance({c.lat0, c.lon0}, c.target_dlat, c.target_dlon);
    LatLon pred = advance({c.lat0, c.lon0}, forecasts[i].dlat, forecasts[i].dlon);
    err[i] = haversine(pred, truth);
  }
  return err;
}

namespace {

EvalReport make_report(std::span<const double> errors, std::string model, std::string basin) {
  std::vector<double> zeros(errors.size(), 0.0);
  EvalReport r;
  r.model = std::move(model);
  r.basin = std::move(basin);
  r.case_count = errors.size();
  r.mae = mae(zeros, errors);
  r.error_sd = errors.size() >= 2 ? error_sd(zeros, errors) : 0.0;
  return r;
}

void attach_skill(EvalReport& r, std::optional<double> baseline_mae, const std::string& baseline_name) {
  if (!baseline_mae) {
    std::cerr << "warning: no baseline forecasts for " << r.model << " (" << r.basin << "); skill omitted\n";
    return;
  }
  r.baseline = baseline_name;
  r.skill = skill(*baseline_mae, r.mae);
}

}  // namespace

EvalReport evaluate_track(std::span<const ForecastRecord> forecasts, std::span<const storm::ForecastCase> cases,
                          std::string model, std::string basin,
                          std::optional<std::span<const ForecastRecord>> baseline, std::string baseline_name) {
  auto err = track_errors(forecasts, cases);
  auto r = make_report(err, std::move(model), std::move(basin));
  std::optional<double> base_mae;
  if (baseline && baseline->size() == cases.size() && !cases.empty()) {
    auto be = track_errors(*baseline, cases);
    std::vector<double> zeros(be.size(), 0.0);
    base_mae = mae(zeros, be);
  }
  attach_skill(r, base_mae, baseline_name);
  return r;
}

EvalReport evaluate_intensity(std::span<const ForecastRecord> forecasts, std::span<const storm::ForecastCase> cases,
                              std::string model, std::string basin,
                              std::optional<std::span<const ForecastRecord>> baseline, std::string baseline_name) {
  if (forecasts.size() != cases.size()) throw DimensionError("forecasts not aligned with cases");
  std::vector<double> err(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) err[i] = std::abs(forecasts[i].wind - cases[i].target_intensity);
  auto r = make_report(err, std::move(model), std::move(basin));
  std::optional<double> base_mae;
  if (baseline && baseline->size() == cases.size() && !cases.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) s += std::abs((*baseline)[i].wind - cases[i].target_intensity);
    base_mae = s / static_cast<double>(cases.size());
  }
  attach_skill(r, base_mae, baseline_name);
  return r;
}

// ---------------------------------------------------------------------------

ComparisonTable build_comparison_table(std::span<const EvalReport> reports, const std::string& baseline) {
  if (reports.empty()) throw DimensionError("comparison table needs at least one report");
  ComparisonTable t;
  t.baseline = baseline;
  auto index_of = [](std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  for (const auto& r : reports) {
    index_of(t.models, r.model);
    index_of(t.basins, r.basin);
  }
  t.cells.assign(t.models.size(), std::vector<std::optional<TableCell>>(t.basins.size()));
  for (const auto& r : reports) {
    auto m = index_of(t.models, r.model);
    auto b = index_of(t.basins, r.basin);
    TableCell c;
    c.mae = r.mae;
    c.error_sd = r.error_sd;
    c.case_count = r.case_count;
    t.cells[m][b] = c;
  }
  for (std::size_t b = 0; b < t.basins.size(); ++b) {
    std::optional<std::size_t> count;
    std::optional<double> base_mae;
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      const auto& cell = t.cells[m][b];
      if (!cell) continue;
      if (count && *count != cell->case_count) {
        throw ConfigError("basin " + t.basins[b] + ": models compared on different case counts (" +
                          std::to_string(*count) + " vs " + std::to_string(cell->case_count) + ")");
      }
      count = cell->case_count;
      if (t.models[m] == baseline) base_mae = cell->mae;
    }
    double best_mae = INFINITY, best_sd = INFINITY, best_skill = -INFINITY;
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      auto& cell = t.cells[m][b];
      if (!cell) continue;
      if (base_mae) cell->skill = skill(*base_mae, cell->mae);
      best_mae = std::min(best_mae, cell->mae);
      best_sd = std::min(best_sd, cell->error_sd);
      if (cell->skill) best_skill = std::max(best_skill, *cell->skill);
    }
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      auto& cell = t.cells[m][b];
      if (!cell) continue;
      cell->best_mae = cell->mae == best_mae;
      cell->best_sd = cell->error_sd == best_sd;
      cell->best_skill = cell->skill && *cell->skill == best_skill;
    }
  }
  return t;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream os;
  os << "model,basin,cases,mae,skill,error_sd,best_mae,best_skill,best_sd\n";
  os << std::setprecision(10);
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t b = 0; b < basins.size(); ++b) {
      const auto& c = cells[m][b];
      if (!c) continue;
      os << models[m] << ',' << basins[b] << ',' << c->case_count << ',' << c->mae << ',';
      if (c->skill) os << *c->skill;
      os << ',' << c->error_sd << ',' << c->best_mae << ',' << c->best_skill << ',' << c->best_sd << '\n';
    }
  }
  return os.str();
}

std::string ComparisonTable::to_text() const {
  std::size_t name_w = 5;
  for (const auto& m : models) name_w = std::max(name_w, m.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "Model";
  for (const auto& b : basins) os << " | " << std::setw(29) << (b + " (skill vs " + baseline + ")");
  os << '\n' << std::setw(static_cast<int>(name_w)) << "";
  for (std::size_t b = 0; b < basins.size(); ++b) os << " | " << std::setw(9) << "MAE" << ' ' << std::setw(9) << "Skill%" << ' ' << std::setw(9) << "ErrSD";
  os << '\n';
  auto fmt = [](double v, bool best) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << v << (best ? "*" : "");
    return s.str();
  };
  for (std::size_t m = 0; m < models.size(); ++m) {
    os << std::setw(static_cast<int>(name_w)) << models[m];
    for (std::size_t b = 0; b < basins.size(); ++b) {
      const auto& c = cells[m][b];
      os << " | ";
      if (!c) {
        os << std::setw(29) << "-";
        continue;
      }
      os << std::setw(9) << fmt(c->mae, c->best_mae) << ' ' << std::setw(9)
         << (c->skill ? fmt(*c->skill, c->best_skill) : std::string("-")) << ' ' << std::setw(9)
         << fmt(c->error_sd, c->best_sd);
    }
    os << '\n';
  }
  os << "(* best in category)\n";
  return os.str();
}

// ---------------------------------------------------------------------------

std::vector<FixtureRow> load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture " + path.string());
  std::vector<FixtureRow> rows;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "table,task,basin,model,cases,mae,skill,error_sd,baseline,provenance") {
        throw FormatError("bad fixture header: " + line);
      }
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 9) f.emplace_back();
    if (f.size() != 10) throw FormatError("fixture line " + std::to_string(line_no) + ": expected 10 fields");
    FixtureRow r;
    r.table = f[0];
    if (f[1] == "track") {
      r.task = Task::Track;
    } else if (f[1] == "intensity") {
      r.task = Task::Intensity;
    } else {
      throw FormatError("fixture line " + std::to_string(line_no) + ": unknown task " + f[1]);
    }
    r.basin = f[2];
    r.model = f[3];
    try {
      r.case_count = static_cast<std::size_t>(std::stoul(f[4]));
      r.mae = std::stod(f[5]);
      r.reported_skill = std::stod(f[6]);
      r.error_sd = std::stod(f[7]);
    } catch (const std::exception&) {
      throw FormatError("fixture line " + std::to_string(line_no) + ": bad number");
    }
    r.baseline = f[8];
    r.provenance = f[9];
    rows.push_back(std::move(r));
  }
  if (!header) throw FormatError("fixture has no header");
  return rows;
}

double skill_tolerance(Task task) { return task == Task::Track ? 0.55 : 0.05; }

std::vector<SkillCheck> reproduce_skills(std::span<const FixtureRow> rows) {
  std::map<std::tuple<std::string, std::string, std::string>, double> baselines;
  for (const auto& r : rows) {
    if (r.model == r.baseline) baselines[{r.table, r.basin, r.model}] = r.mae;
  }
  std::vector<SkillCheck> out;
  for (const auto& r : rows) {
    if (r.model == r.baseline) continue;
    SkillCheck c;
    c.row = r;
    auto it = baselines.find({r.table, r.basin, r.baseline});
    if (it == baselines.end()) {
      // Consensus tables omit the baseline row; borrow it from any table of the same task.
      for (const auto& b : rows) {
        if (b.model == r.baseline && b.basin == r.basin && b.task == r.task) {
          it = baselines.find({b.table, b.basin, b.model});
          break;
        }
      }
    }
    if (it == baselines.end()) throw ConfigError("no baseline " + r.baseline + " for basin " + r.basin);
    c.baseline_mae = it->second;
    c.computed = skill(c.baseline_mae, r.mae);
    c.tolerance = skill_tolerance(r.task);
    c.pass = std::abs(c.computed - r.reported_skill) <= c.tolerance;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<EvalReport> fixture_reports(std::span<const FixtureRow> rows, const std::string& table) {
  std::vector<EvalReport> out;
  for (const auto& r : rows) {
    if (r.table != table) continue;
    EvalReport e;
    e.model = r.model;
    e.basin = r.basin;
    e.case_count = r.case_count;
    e.mae = r.mae;
    e.error_sd = r.error_sd;
    e.baseline = r.baseline;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace hurricast::eval
