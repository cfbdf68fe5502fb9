#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "hurricast/errors.hpp"
#include "hurricast/eval.hpp"

using namespace hurricast;
using namespace hurricast::eval;

namespace {

storm::ForecastCase make_case(std::string sid, double lat0, double lon0, double dlat, double dlon, double target) {
  storm::ForecastCase c;
  c.storm_id = std::move(sid);
  c.t0 = parse_iso8601("2017-09-01T00:00:00Z");
  c.lat0 = lat0;
  c.lon0 = lon0;
  c.target_dlat = dlat;
  c.target_dlon = dlon;
  c.target_intensity = target;
  return c;
}

ForecastRecord make_forecast(const storm::ForecastCase& c, double dlat, double dlon, double wind) {
  ForecastRecord f;
  f.model_id = "M";
  f.storm_id = c.storm_id;
  f.t0 = c.t0;
  f.dlat = dlat;
  f.dlon = dlon;
  f.wind = wind;
  const auto p = advance({c.lat0, c.lon0}, dlat, dlon);
  f.lat = p.lat;
  f.lon = p.lon;
  return f;
}

// Spherical law of cosines; independent of the half-angle formula.
double cosine_distance(LatLon a, LatLon b) {
  const double k = std::numbers::pi / 180.0;
  const double c = std::sin(a.lat * k) * std::sin(b.lat * k) +
                   std::cos(a.lat * k) * std::cos(b.lat * k) * std::cos((b.lon - a.lon) * k);
  return kEarthRadiusKm * std::acos(std::clamp(c, -1.0, 1.0));
}

EvalReport report(std::string model, std::string basin, double mae_value, std::size_t n = 10, double sd = 1.0) {
  EvalReport r;
  r.model = std::move(model);
  r.basin = std::move(basin);
  r.mae = mae_value;
  r.error_sd = sd;
  r.case_count = n;
  return r;
}

}  // namespace

TEST_CASE("haversine reference distances") {
  CHECK(haversine({0, 0}, {1, 0}) == doctest::Approx(111.195).epsilon(1e-5));
  CHECK(haversine({0, 0}, {0, 1}) == doctest::Approx(111.195).epsilon(1e-5));
  CHECK(haversine({0, 0}, {90, 0}) == doctest::Approx(10007.543).epsilon(1e-6));
  CHECK(haversine({10, 179.5}, {10, -179.5}) == doctest::Approx(haversine({10, 0}, {10, 1})));
}

TEST_CASE("haversine metric properties on random pairs") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
  for (int i = 0; i < 500; ++i) {
    const LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    const double ab = haversine(a, b);
    CHECK(ab == doctest::Approx(haversine(b, a)).epsilon(1e-12));
    CHECK(haversine(a, a) == doctest::Approx(0.0));
    CHECK(ab >= 0.0);
    CHECK(haversine(a, c) <= ab + haversine(b, c) + 1e-9);
    CHECK(ab == doctest::Approx(cosine_distance(a, b)).epsilon(1e-6));
  }
}

TEST_CASE("mae and error sd") {
  const std::vector<double> p{1, 2, 3}, t{2, 2, 5};
  CHECK(mae(p, t) == doctest::Approx(1.0));
  CHECK(error_sd(p, t) == doctest::Approx(1.0));  // |e| = {1, 0, 2}
  const std::vector<double> p2{0, 0}, t2{1, 3};
  CHECK(error_sd(p2, t2) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(mae(std::vector<double>{}, std::vector<double>{}), DimensionError);
  CHECK_THROWS_AS(mae(p, t2), DimensionError);
  CHECK_THROWS_AS(error_sd(std::vector<double>{1}, std::vector<double>{2}), DimensionError);
}

TEST_CASE("skill examples and monotonicity") {
  CHECK(skill(121, 81) == doctest::Approx(33.06).epsilon(1e-3));
  CHECK(skill(9.8, 13.15) == doctest::Approx(-34.18).epsilon(1e-3));
  CHECK(skill(10, 10) == 0.0);
  CHECK(skill(10, 0) == 100.0);
  CHECK_THROWS_AS(skill(0, 1), DomainError);
  for (double e = 1; e < 50; e += 1) CHECK(skill(40, e) > skill(40, e + 0.5));
}

TEST_CASE("zero-displacement forecast at the equator") {
  const auto c = make_case("S1", 0.0, 0.0, 0.0, 4.0, 50.0);
  const std::vector<storm::ForecastCase> cases{c};
  const std::vector<ForecastRecord> f{make_forecast(c, 0.0, 0.0, 50.0)};
  const auto err = track_errors(f, cases);
  CHECK(err[0] == doctest::Approx(444.78).epsilon(1e-4));
}

TEST_CASE("track mae equals the mean haversine error and ignores duplication order") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<storm::ForecastCase> cases;
  std::vector<ForecastRecord> fc;
  for (int i = 0; i < 40; ++i) {
    auto c = make_case("S" + std::to_string(i), 15 + 5 * g(rng), -60 + 10 * g(rng), g(rng), 2 * g(rng), 60);
    fc.push_back(make_forecast(c, c.target_dlat + 0.3 * g(rng), c.target_dlon + 0.3 * g(rng), 60 + 5 * g(rng)));
    cases.push_back(c);
  }
  const auto r = evaluate_track(fc, cases, "M", "ALL", fc, "M");
  double expected = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto truth = advance({cases[i].lat0, cases[i].lon0}, cases[i].target_dlat, cases[i].target_dlon);
    expected += cosine_distance({fc[i].lat, fc[i].lon}, truth);
  }
  CHECK(r.mae == doctest::Approx(expected / cases.size()).epsilon(1e-6));
  CHECK(r.case_count == 40);
  REQUIRE(r.skill);
  CHECK(*r.skill == doctest::Approx(0.0));

  auto cases2 = cases;
  auto fc2 = fc;
  cases2.insert(cases2.end(), cases.begin(), cases.end());
  fc2.insert(fc2.end(), fc.begin(), fc.end());
  std::vector<std::size_t> perm(cases2.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<storm::ForecastCase> cs;
  std::vector<ForecastRecord> fs;
  for (auto k : perm) {
    cs.push_back(cases2[k]);
    fs.push_back(fc2[k]);
  }
  CHECK(evaluate_track(fs, cs, "M", "ALL", fs, "M").mae == doctest::Approx(r.mae).epsilon(1e-12));

  fs.pop_back();
  CHECK_THROWS_AS(track_errors(fs, cs), DimensionError);
}

TEST_CASE("intensity report with a baseline") {
  std::vector<storm::ForecastCase> cases;
  std::vector<ForecastRecord> good, base;
  for (int i = 0; i < 4; ++i) {
    auto c = make_case("S" + std::to_string(i), 20, -50, 0, 0, 50 + 10 * i);
    cases.push_back(c);
    good.push_back(make_forecast(c, 0, 0, c.target_intensity + (i % 2 ? 2 : -2)));
    base.push_back(make_forecast(c, 0, 0, c.target_intensity + 4));
  }
  const auto r = evaluate_intensity(good, cases, "GOOD", "ALL", base, "BASE");
  CHECK(r.mae == doctest::Approx(2.0));
  CHECK(r.error_sd == doctest::Approx(0.0));
  REQUIRE(r.skill);
  CHECK(*r.skill == doctest::Approx(50.0));
  CHECK(r.baseline == "BASE");
}

TEST_CASE("comparison table recomputes skills and marks the best cells") {
  std::vector<EvalReport> reports{report("BASE", "EP", 100.0, 10, 5.0), report("A", "EP", 80.0, 10, 3.0),
                                  report("B", "EP", 90.0, 10, 2.0), report("BASE", "NA", 50.0, 7),
                                  report("A", "NA", 55.0, 7)};
  const auto t = build_comparison_table(reports, "BASE");
  CHECK(t.basins == std::vector<std::string>{"EP", "NA"});
  CHECK(t.models == std::vector<std::string>{"BASE", "A", "B"});
  const auto& a_ep = *t.cells[1][0];
  REQUIRE(a_ep.skill);
  CHECK(*a_ep.skill == doctest::Approx(20.0));
  CHECK(a_ep.best_mae);
  CHECK(a_ep.best_skill);
  CHECK(t.cells[2][0]->best_sd);
  CHECK_FALSE(t.cells[2][1].has_value());
  CHECK(*t.cells[1][1]->skill == doctest::Approx(-10.0));
  CHECK_FALSE(t.to_csv().empty());
  CHECK(t.to_text().find("NA") != std::string::npos);

  // Order of the reports within a basin does not change any cell.
  std::mt19937_64 rng(1);
  for (int k = 0; k < 10; ++k) {
    auto shuffled = reports;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto u = build_comparison_table(shuffled, "BASE");
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      const auto mi = std::find(u.models.begin(), u.models.end(), t.models[m]) - u.models.begin();
      for (std::size_t b = 0; b < t.basins.size(); ++b) {
        const auto bi = std::find(u.basins.begin(), u.basins.end(), t.basins[b]) - u.basins.begin();
        const auto& x = t.cells[m][b];
        const auto& y = u.cells[mi][bi];
        REQUIRE(x.has_value() == y.has_value());
        if (!x) continue;
        CHECK(x->mae == y->mae);
        CHECK(x->skill == y->skill);
        CHECK(x->best_mae == y->best_mae);
      }
    }
  }
}

TEST_CASE("comparison table rejects mismatched case counts") {
  std::vector<EvalReport> reports{report("BASE", "EP", 100.0, 10), report("A", "EP", 80.0, 9)};
  CHECK_THROWS_AS(build_comparison_table(reports, "BASE"), ConfigError);
  CHECK_THROWS_AS(build_comparison_table({}, "BASE"), DimensionError);
}

TEST_CASE("published skills are reproduced from the published errors") {
  const auto rows = load_fixture(std::string(HURRICAST_DATA_DIR) + "/tables_fixture.csv");
  REQUIRE(rows.size() > 20);
  const auto checks = reproduce_skills(rows);
  REQUIRE_FALSE(checks.empty());
  for (const auto& c : checks) {
    INFO(c.row.table << " " << c.row.basin << " " << c.row.model << ": computed " << c.computed);
    CHECK(c.pass);
    CHECK(c.tolerance == skill_tolerance(c.row.task));
  }
  CHECK(skill_tolerance(Task::Track) == doctest::Approx(0.55));
  CHECK(skill_tolerance(Task::Intensity) == doctest::Approx(0.05));
}
