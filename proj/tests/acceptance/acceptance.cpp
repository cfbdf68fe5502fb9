// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hurricast/ensemble.hpp"
#include "hurricast/eval.hpp"
#include "hurricast/gbt.hpp"
#include "hurricast/io.hpp"
#include "hurricast/nn/layers.hpp"
#include "hurricast/nn/models.hpp"
#include "hurricast/pipeline.hpp"
#include "hurricast/tensor.hpp"
#include "test_data.hpp"

using namespace hurricast;
using DMat = Eigen::MatrixXd;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

DMat random(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  DMat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double rel_error(const DMat& a, const DMat& n) {
  const double d = a.norm() + n.norm();
  return d < 1e-7 ? 0.0 : (a - n).norm() / d;
}

template <typename Loss>
DMat numeric(DMat& x, Loss&& loss) {
  const double h = 1e-6;
  DMat g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = loss();
    x.data()[i] = keep - h;
    const double down = loss();
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

// Worst relative error over the input and trainable parameters of
// L = sum(R .* f(x)).
double layer_error(nn::ParamList<double> params, DMat& x, const std::function<DMat(const DMat&)>& fwd,
                   const std::function<DMat(const DMat&)>& bwd, std::mt19937_64& rng) {
  const DMat r = random(fwd(x).rows(), fwd(x).cols(), rng);
  for (auto* p : params) p->zero_grad();
  fwd(x);
  const DMat dx = bwd(r);
  std::vector<DMat> grads;
  for (auto* p : params) grads.push_back(p->grad);
  auto loss = [&] { return (fwd(x).array() * r.array()).sum(); };
  double worst = rel_error(dx, numeric(x, loss));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->trainable) worst = std::max(worst, rel_error(grads[i], numeric(params[i]->value, loss)));
  }
  return worst;
}

nn::Image<double> image(const DMat& data, int batch, int h, int w) {
  nn::Image<double> im;
  im.data = data;
  im.batch = batch;
  im.height = h;
  im.width = w;
  return im;
}

// --- 1 ---------------------------------------------------------------------

void skill_tables(Outcome& out) {
  const auto rows = eval::load_fixture(std::string(HURRICAST_DATA_DIR) + "/tables_fixture.csv");
  const auto checks = eval::reproduce_skills(rows);
  int failed = 0;
  for (const auto& c : checks) failed += c.pass ? 0 : 1;
  out.detail << checks.size() << " skill entries, " << failed << " outside tolerance";
  out.require(checks.size() >= 22, "at least 22 skill entries");
  out.require(failed == 0, "all entries within tolerance");
  out.require(std::abs(eval::skill(121, 81) - 33.06) < 0.005, "skill(121, 81) = 33.06");
  out.require(std::abs(eval::skill(11.7, 15.7) + 34.19) < 0.005, "skill(11.7, 15.7) = -34.19");
}

// --- 2 ---------------------------------------------------------------------

void gradient_suite(Outcome& out) {
  using namespace nn;
  std::mt19937_64 rng(2024);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
  for (int n = 0; n < 20; ++n) {
    {
      const int in = pick(rng, 1, 6);
      Dense<double> d("d", in, pick(rng, 1, 5), rng);
      DMat x = random(in, pick(rng, 1, 4), rng);
      ParamList<double> ps;
      d.params(ps);
      note("dense", layer_error(
                        ps, x, [&](const DMat& v) { return d.forward(v); }, [&](const DMat& g) { return d.backward(g); },
                        rng));
    }
    {
      const int cin = pick(rng, 1, 3), k = pick(rng, 1, 3), h = pick(rng, k, 6), w = pick(rng, k, 6),
                b = pick(rng, 1, 2);
      Conv2d<double> conv("c", cin, pick(rng, 1, 3), k, rng);
      DMat x = random(cin, b * h * w, rng);
      ParamList<double> ps;
      conv.params(ps);
      note("conv", layer_error(
                       ps, x, [&](const DMat& v) { return conv.forward(image(v, b, h, w)).data; },
                       [&](const DMat& g) { return conv.backward(image(g, b, h - k + 1, w - k + 1)).data; }, rng));
    }
    {
      const int c = pick(rng, 1, 3), h = pick(rng, 2, 7), w = pick(rng, 2, 7), b = pick(rng, 1, 2);
      MaxPool2d<double> pool(2);
      DMat x = random(c, b * h * w, rng);
      note("pooling", layer_error(
                          {}, x, [&](const DMat& v) { return pool.forward(image(v, b, h, w)).data; },
                          [&](const DMat& g) { return pool.backward(image(g, b, h / 2, w / 2)).data; }, rng));
      const int steps = pick(rng, 1, 4);
      DMat y = random(c, steps * b, rng);
      note("pooling", layer_error(
                          {}, y, [&](const DMat& v) { return mean_pool(v, steps); },
                          [&](const DMat& g) { return mean_pool_backward(g, steps); }, rng));
    }
    {
      const int c = pick(rng, 1, 4);
      BatchNorm<double> bn("bn", c);
      ParamList<double> ps;
      bn.params(ps);
      ps[0]->value = random(c, 1, rng).array() + 1.0;
      ps[1]->value = random(c, 1, rng);
      DMat x = random(c, pick(rng, 3, 10), rng, 2.0);
      note("batch-norm", layer_error(
                             ps, x, [&](const DMat& v) { return bn.forward(v, true); },
                             [&](const DMat& g) { return bn.backward(g); }, rng));
    }
    {
      const int in = pick(rng, 1, 4), steps = pick(rng, 1, 4);
      Gru<double> gru("g", in, pick(rng, 1, 4), rng);
      ParamList<double> ps;
      gru.params(ps);
      DMat x = random(in, steps * pick(rng, 1, 3), rng);
      note("gru", layer_error(
                      ps, x, [&](const DMat& v) { return gru.forward(v, steps); },
                      [&](const DMat& g) { return gru.backward(g); }, rng));
    }
    {
      const int heads = pick(rng, 1, 2), dim = heads * pick(rng, 1, 3), steps = pick(rng, 1, 4);
      MultiHeadAttention<double> mha("a", dim, heads, rng);
      ParamList<double> ps;
      mha.params(ps);
      DMat x = random(dim, steps * pick(rng, 1, 3), rng);
      note("attention", layer_error(
                            ps, x, [&](const DMat& v) { return mha.forward(v, steps); },
                            [&](const DMat& g) { return mha.backward(g); }, rng));
    }
    {
      Param<double> w;
      w.penalized = true;
      w.resize(pick(rng, 1, 4), pick(rng, 1, 4));
      w.value = random(w.value.rows(), w.value.cols(), rng);
      ParamList<double> ps{&w};
      const int rows = pick(rng, 1, 3), cols = pick(rng, 1, 6);
      DMat pred = random(rows, cols, rng);
      const DMat truth = random(rows, cols, rng);
      const double lambda = std::uniform_real_distribution<double>(0.0, 0.1)(rng);
      w.zero_grad();
      DMat dpred;
      mse_l2_loss(pred, truth, ps, lambda, &dpred, true);
      auto loss = [&] { return mse_l2_loss<double>(pred, truth, ps, lambda); };
      note("mse+l2", std::max(rel_error(dpred, numeric(pred, loss)), rel_error(w.grad, numeric(w.value, loss))));
    }
  }
  for (const auto& [name, e] : worst) {
    out.detail << name << " " << e << "; ";
    out.require(e < 1e-4, name + " relative error < 1e-4");
  }
  out.detail << "20 instances each";
}

// --- 3 ---------------------------------------------------------------------

void tucker_suite(Outcome& out) {
  std::mt19937_64 rng(3);
  double worst_full = 0.0;
  for (int i = 0; i < 50; ++i) {
    // Every fifth tensor is a downscaled shape.
    const Tensor4d::Dims dims = i % 5 == 4 ? Tensor4d::Dims{4, 5, 9, 9} : Tensor4d::Dims{8, 9, 25, 25};
    const Tensor4d t = Tensor4d::Random(dims, rng);
    const auto f = tucker(t, {dims[0], dims[1], dims[2], dims[3]});
    worst_full = std::max(worst_full, (reconstruct(f).data() - t.data()).norm() / t.norm());
  }
  int bound_violations = 0;
  double worst_orth = 0.0;
  std::uniform_int_distribution<int> dim(2, 6);
  for (int i = 0; i < 100; ++i) {
    const Tensor4d::Dims dims{dim(rng), dim(rng), dim(rng), dim(rng)};
    const Tensor4d t = Tensor4d::Random(dims, rng);
    TuckerRanks ranks;
    double bound = 0.0;
    for (int n = 0; n < 4; ++n) {
      ranks[n] = std::uniform_int_distribution<Eigen::Index>(1, dims[n])(rng);
      const auto b = mode_basis(t, n + 1);
      for (Eigen::Index k = ranks[n]; k < b.singular_values.size(); ++k) bound += b.singular_values[k] * b.singular_values[k];
    }
    const auto f = tucker(t, ranks);
    if ((reconstruct(f).data() - t.data()).squaredNorm() > bound * (1 + 1e-9) + 1e-12) ++bound_violations;
    for (const auto& u : f.factors) {
      const DMat g = u.transpose() * u - DMat::Identity(u.cols(), u.cols());
      worst_orth = std::max(worst_orth, g.cwiseAbs().maxCoeff());
    }
  }
  const Tensor4f cube = Tensor4f::Random(kCubeDims, rng);
  const auto features = extract_vision_features(cube);
  out.detail << "full-rank error " << worst_full << ", bound violations " << bound_violations << "/100, orthonormality "
             << worst_orth << ", features " << features.size();
  out.require(worst_full < 1e-9, "full-rank reconstruction < 1e-9");
  out.require(bound_violations == 0, "truncation bound");
  out.require(worst_orth < 1e-8, "orthonormal factors");
  out.require(features.size() == 135, "135 vision features");
}

// --- 4 ---------------------------------------------------------------------

gbt::GbtConfig exact(int depth, int rounds, double lr) {
  gbt::GbtConfig c;
  c.max_depth = depth;
  c.n_estimators = rounds;
  c.learning_rate = lr;
  c.subsample = 1.0;
  c.colsample_bytree = 1.0;
  return c;
}

void gbt_oracle(Outcome& out) {
  DMat x(4, 1);
  x << 1, 2, 3, 4;
  Eigen::VectorXd y(4);
  y << 1, 1, 3, 5;
  const auto m = gbt::fit(x, y, exact(1, 2, 0.5));
  const Eigen::VectorXd expected = (Eigen::VectorXd(4) << 1.75, 1.75, 2.75, 3.5).finished();
  const double gap = (m.predict(x) - expected).cwiseAbs().maxCoeff();
  out.require(gap < 1e-12, "hand-traced predictions");

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  DMat xr(400, 6);
  Eigen::VectorXd yr(400);
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 6; ++j) xr(i, j) = g(rng);
    yr[i] = 2 * xr(i, 0) - (xr(i, 1) > 0 ? 1.5 : 0.0) + xr(i, 2) * xr(i, 3) + 0.2 * g(rng);
  }
  const auto mono = gbt::fit(xr, yr, exact(4, 60, 0.2));
  bool monotone = true;
  for (std::size_t i = 1; i < mono.training_mse().size(); ++i) {
    monotone = monotone && mono.training_mse()[i] <= mono.training_mse()[i - 1] + 1e-12;
  }
  out.require(monotone, "monotone training MSE");

  gbt::GbtConfig sampled;
  sampled.max_depth = 6;
  sampled.n_estimators = 100;
  sampled.subsample = 0.7;
  sampled.colsample_bytree = 0.8;
  sampled.seed = 99;
  auto bytes = [&] {
    io::ByteWriter w;
    gbt::fit(xr, yr, sampled).serialize(w);
    return w.take();
  };
  const bool identical = bytes() == bytes();
  out.require(identical, "bitwise determinism");
  out.detail << "hand trace gap " << gap << ", monotone " << (monotone ? "yes" : "no") << ", deterministic "
             << (identical ? "yes" : "no");
}

// --- 5 ---------------------------------------------------------------------

void elasticnet_oracle(Outcome& out) {
  std::mt19937_64 rng(5);
  const DMat x = random(80, 4, rng);
  const Eigen::VectorXd y = 3.0 + (x * Eigen::Vector4d(1.0, -2.0, 0.5, 0.0)).array() + 0.1 * random(80, 1, rng).array();
  ensemble::ElasticNetConfig ols;
  ols.alpha = 0.0;
  const auto m = ensemble::fit_elasticnet(x, y, ols);
  DMat design(80, 5);
  design << DMat::Ones(80, 1), x;
  const Eigen::VectorXd beta = (design.transpose() * design).ldlt().solve(design.transpose() * y);
  const double ols_gap = std::max((m.coef - beta.tail(4)).cwiseAbs().maxCoeff(), std::abs(m.intercept - beta[0]));
  out.require(ols_gap < 1e-8, "alpha = 0 matches least squares");

  // Orthogonal columns with (1/N) x'x = 1: lasso coefficient is S(x'y/N, alpha).
  DMat xo(4, 1);
  xo << 1, -1, 1, -1;
  Eigen::VectorXd yo(4);
  yo << 2.0, -1.0, 0.5, 0.25;
  ensemble::ElasticNetConfig lasso;
  lasso.alpha = 0.3;
  lasso.l1_ratio = 1.0;
  const auto ml = ensemble::fit_elasticnet(xo, yo, lasso);
  const Eigen::VectorXd yc = yo.array() - yo.mean();
  const double z = xo.col(0).dot(yc) / 4.0;
  const double soft = z > 0.3 ? z - 0.3 : (z < -0.3 ? z + 0.3 : 0.0);
  const double lasso_gap = std::abs(ml.coef[0] - soft);
  out.require(lasso_gap < 1e-10, "lasso equals soft threshold");

  bool monotone = true;
  for (double a : {0.01, 0.1, 0.5}) {
    for (double l1 : {0.0, 0.5, 1.0}) {
      ensemble::ElasticNetConfig c;
      c.alpha = a;
      c.l1_ratio = l1;
      const auto fit = ensemble::fit_elasticnet(x, y, c);
      for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        monotone = monotone && fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12;
      }
    }
  }
  out.require(monotone, "objective non-increasing");
  out.detail << "least-squares gap " << ols_gap << ", soft-threshold gap " << lasso_gap;
}

// --- 6 ---------------------------------------------------------------------

double intensity_mae(std::span<const ForecastRecord> f, std::span<const storm::ForecastCase> cases) {
  return eval::evaluate_intensity(f, cases, "m").mae;
}

void synthetic_reproduction(Outcome& out) {
  synthetic::SyntheticSpec spec;  // reference spec: seed 7, 200 storms x 40 steps
  spec.placement = synthetic::SignalPlacement::Vision;
  const auto prep = testdata::prepare(spec);
  const auto& s = prep.split;
  const auto* cubes = &prep.data.cubes;

  std::vector<pipeline::ModelBundle> bundles;
  for (int v : {1, 2, 3, 4}) {
    pipeline::PipelineConfig c;
    c.variant = v;
    c.seed = spec.seed;
    c.intensity_train.max_epochs = 2;
    c.track_train.max_epochs = 2;
    bundles.push_back(pipeline::train_variant(s.train, s.validation, v == 1 ? nullptr : cubes, c));
  }
  std::map<int, double> mae;
  std::map<int, std::vector<ForecastRecord>> test_fc;
  for (const auto& b : bundles) {
    test_fc[b.variant] = pipeline::predict_cases(b, s.test, cubes);
    mae[b.variant] = intensity_mae(test_fc[b.variant], s.test);
  }
  const auto run = pipeline::train_huml_ensemble(bundles, s.validation, s.test, cubes);
  const double ens = intensity_mae(run.test_forecasts, s.test);
  const double best_base = std::min({mae[1], mae[2], mae[3], mae[4]});

  // Operational consensus with and without variant 4, on the test cases.
  std::map<std::string, std::vector<ForecastRecord>> ops_by_case;
  for (const auto& f : prep.data.operational) ops_by_case[f.case_id()].push_back(f);
  std::vector<ForecastRecord> ops_test, ops_only;
  for (const auto& c : s.test) {
    const auto& members = ops_by_case.at(c.id());
    ops_test.insert(ops_test.end(), members.begin(), members.end());
    ops_only.push_back(ensemble::simple_average(members, "OPS"));
  }
  const auto with_v4 = pipeline::operational_average(test_fc[4], ops_test);
  const double ops_mae = intensity_mae(ops_only, s.test);
  const double ops_v4_mae = intensity_mae(with_v4, s.test);

  out.detail << s.test.size() << " test cases; MAE kt: v1 " << mae[1] << ", v2 " << mae[2] << ", v3 " << mae[3] << ", v4 " << mae[4]
             << ", ensemble " << ens << ", operational " << ops_mae << ", operational+v4 " << ops_v4_mae
             << ", noise floor " << prep.data.intensity_noise_floor;
  out.require(mae[4] < mae[1], "6a: variant 4 beats variant 1");
  out.require(ens <= 1.05 * best_base, "6b: ensemble within 5% of the best base variant");
  out.require(ops_v4_mae < ops_mae, "6c: variant 4 improves the operational consensus");
}

// --- 7 ---------------------------------------------------------------------

void shapes_and_protocol(Outcome& out) {
  out.require(nn::CnnEncoder<float>::spatial_trace(25) == std::vector<int>{25, 23, 11, 9, 4, 2, 1}, "spatial trace");
  nn::NetConfig gru;
  out.require(nn::HurricastNet<float>(gru).concat_hidden_size() == 1024, "GRU concatenated hidden 1024");
  nn::NetConfig tf;
  tf.decoder = nn::DecoderKind::Transformer;
  out.require(tf.embedding_size() == 142, "transformer pooled 142");
  out.require(pipeline::embedding_length(2) == 135 && pipeline::embedding_length(3) == 128 &&
                  pipeline::embedding_length(4) == 142,
              "embedding lengths by variant");

  const storm::SplitYears years;
  out.require(years.train_last == 2011 && years.validation_first == 2012 && years.validation_last == 2015 &&
                  years.test_first == 2016 && years.test_last == 2019,
              "split years");

  auto spec = testdata::small_spec(synthetic::SignalPlacement::Statistical, 80);
  const auto prep = testdata::prepare(spec);
  auto year = [](const storm::ForecastCase& c) { return std::stoi(format_iso8601(c.t0).substr(0, 4)); };
  bool audit = true;
  for (const auto& c : prep.split.train) audit = audit && c.provenance == storm::Provenance::Train && year(c) <= 2011;
  for (const auto& c : prep.split.validation) {
    audit = audit && c.provenance == storm::Provenance::Validation && year(c) >= 2012 && year(c) <= 2015;
  }
  for (const auto& c : prep.split.test) {
    audit = audit && c.provenance == storm::Provenance::Test && year(c) >= 2016 && year(c) <= 2019;
  }
  out.require(audit, "provenance tags match years");

  auto leaked = prep.split.train;
  leaked.push_back(prep.split.test.front());
  pipeline::PipelineConfig c;
  c.variant = 1;
  c.gbt.n_estimators = 100;
  bool rejected = false;
  try {
    pipeline::train_variant(leaked, prep.split.validation, nullptr, c);
  } catch (const ConfigError&) {
    rejected = true;
  }
  out.require(rejected, "test case in training set is rejected");
  out.detail << prep.split.train.size() << "/" << prep.split.validation.size() << "/" << prep.split.test.size()
             << " cases audited, leakage " << (rejected ? "rejected" : "accepted");
}

// --- 8 ---------------------------------------------------------------------

void metric_identities(Outcome& out) {
  const double d = eval::haversine({0, 0}, {0, 1});
  out.require(std::abs(d - 111.195) <= 0.001, "haversine (0,0)-(0,1)");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  bool symmetric = true, zero = true;
  for (int i = 0; i < 1000; ++i) {
    const eval::LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    symmetric = symmetric && eval::haversine(a, b) == eval::haversine(b, a);
    zero = zero && eval::haversine(a, a) == 0.0;
  }
  out.require(symmetric, "symmetry");
  out.require(zero, "zero distance");

  auto spec = testdata::small_spec(synthetic::SignalPlacement::Vision, 40);
  const auto prep = testdata::prepare(spec);
  pipeline::PipelineConfig c;
  c.variant = 4;
  c.intensity_train.max_epochs = 1;
  c.track_train.max_epochs = 1;
  const auto bundle = pipeline::train_variant(prep.split.train, prep.split.validation, &prep.data.cubes, c);
  double slowest = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(20, prep.split.test.size()); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    pipeline::predict_case(bundle, prep.split.test[i], &prep.data.cubes);
    slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  out.require(slowest < 1.0, "predict_case under 1 s");
  out.detail << "haversine " << d << " km, slowest variant-4 predict_case " << slowest * 1000 << " ms";
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Outcome&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "skill-table reproduction", 1, skill_tables},
      {2, "gradient suite", 120, gradient_suite},
      {3, "Tucker suite", 120, tucker_suite},
      {4, "GBT oracle equivalence", 30, gbt_oracle},
      {5, "ElasticNet oracle", 30, elasticnet_oracle},
      {6, "synthetic end-to-end claims", 600, synthetic_reproduction},
      {7, "shape and protocol invariants", 60, shapes_and_protocol},
      {8, "metric identities", 60, metric_identities},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(out);
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) out.require(false, "runtime budget " + std::to_string(c.budget_s) + " s");
    failures += out.pass ? 0 : 1;
    std::printf("criterion %d %s: %s (%.2f s) %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL", secs,
                out.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
