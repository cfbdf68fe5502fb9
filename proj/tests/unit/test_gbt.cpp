#include <doctest.h>

#include <random>

#include "hurricast/errors.hpp"
#include "hurricast/gbt.hpp"
#include "hurricast/io.hpp"

using namespace hurricast;
using namespace hurricast::gbt;

namespace {

GbtConfig plain(int depth, int rounds, double lr) {
  GbtConfig c;
  c.max_depth = depth;
  c.n_estimators = rounds;
  c.learning_rate = lr;
  c.subsample = 1.0;
  c.colsample_bytree = 1.0;
  c.min_child_weight = 1.0;
  c.reg_lambda = 1.0;
  return c;
}

void random_problem(int n, int f, std::uint64_t seed, Eigen::MatrixXd& x, Eigen::VectorXd& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  x.resize(n, f);
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < f; ++j) x(i, j) = g(rng);
    y[i] = 3.0 * x(i, 0) - (x(i, 1 % f) > 0.0 ? 2.0 : 0.0) + 0.1 * g(rng);
  }
}

}  // namespace

// x = 1..4, y = {1, 1, 3, 5}, depth-1 stumps, lr 0.5, lambda 1.
// Round 1: base 2.5, gradients {1.5, 1.5, -0.5, -2.5}; the split before x=3
// has gain 3 + 3 = 6, leaves -3/3 and 3/3.
// Round 2: gradients {1, 1, 0, -2}; the split before x=4 has gain 1 + 2 = 3,
// leaves -2/4 and 2/2.
TEST_CASE("two boosting rounds traced by hand") {
  Eigen::MatrixXd x(4, 1);
  x << 1, 2, 3, 4;
  Eigen::VectorXd y(4);
  y << 1, 1, 3, 5;
  const auto m = fit(x, y, plain(1, 2, 0.5));
  CHECK(m.base_score() == doctest::Approx(2.5));
  REQUIRE(m.trees().size() == 2);
  const auto& t1 = m.trees()[0].nodes;
  REQUIRE(t1.size() == 3);
  CHECK(t1[0].feature == 0);
  CHECK(t1[0].threshold == 3.0f);
  CHECK(t1[1].value == doctest::Approx(-1.0));
  CHECK(t1[2].value == doctest::Approx(1.0));
  const auto& t2 = m.trees()[1].nodes;
  CHECK(t2[0].threshold == 4.0f);
  CHECK(t2[1].value == doctest::Approx(-0.5));
  CHECK(t2[2].value == doctest::Approx(1.0));

  const auto p = m.predict(x);
  CHECK(p[0] == doctest::Approx(1.75));
  CHECK(p[1] == doctest::Approx(1.75));
  CHECK(p[2] == doctest::Approx(2.75));
  CHECK(p[3] == doctest::Approx(3.5));
  REQUIRE(m.training_mse().size() == 3);
  CHECK(m.training_mse()[0] == doctest::Approx(2.75));
  CHECK(m.training_mse()[1] == doctest::Approx(1.5));
  CHECK(m.training_mse()[2] == doctest::Approx(0.859375));
}

TEST_CASE("training MSE never increases without subsampling") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    random_problem(200, 4, seed, x, y);
    const auto m = fit(x, y, plain(3, 40, 0.1));
    const auto& mse = m.training_mse();
    for (std::size_t i = 1; i < mse.size(); ++i) CHECK(mse[i] <= mse[i - 1] + 1e-12);
    CHECK(mse.back() < 0.2 * mse.front());
  }
}

TEST_CASE("trees respect max_depth and min_child_weight") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  random_problem(100, 3, 9, x, y);
  auto c = plain(2, 10, 0.1);
  c.min_child_weight = 30.0;
  const auto m = fit(x, y, c);
  for (const auto& t : m.trees()) {
    CHECK(t.depth() <= 2);
    std::vector<int> counts(t.nodes.size(), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::int32_t k = 0;
      while (t.nodes[k].feature >= 0) {
        k = static_cast<float>(x(i, t.nodes[k].feature)) < t.nodes[k].threshold ? t.nodes[k].left : t.nodes[k].right;
      }
      ++counts[k];
    }
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
      if (t.nodes[k].feature < 0) CHECK(counts[k] >= 30);
    }
  }
}

TEST_CASE("fitting is bitwise deterministic for a fixed seed") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  random_problem(300, 5, 4, x, y);
  GbtConfig c;
  c.n_estimators = 30;
  c.subsample = 0.7;
  c.colsample_bytree = 0.8;
  c.seed = 42;
  io::ByteWriter a, b;
  fit(x, y, c).serialize(a);
  fit(x, y, c).serialize(b);
  CHECK(a.buffer() == b.buffer());
  c.seed = 43;
  io::ByteWriter d;
  fit(x, y, c).serialize(d);
  CHECK(a.buffer() != d.buffer());
}

TEST_CASE("serialization round trip predicts identically") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  random_problem(150, 3, 5, x, y);
  const auto m = fit(x, y, plain(4, 25, 0.2));
  io::ByteWriter w;
  m.serialize(w);
  io::ByteReader r(w.buffer());
  const auto back = GbtModel::deserialize(r);
  CHECK(r.done());
  CHECK(back.predict(x) == m.predict(x));

  auto bytes = w.buffer();
  bytes.resize(bytes.size() - 5);
  io::ByteReader short_reader(bytes);
  CHECK_THROWS_AS(GbtModel::deserialize(short_reader), CorruptionError);
}

TEST_CASE("prediction checks the feature count") {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  random_problem(50, 3, 6, x, y);
  const auto m = fit(x, y, plain(2, 3, 0.1));
  CHECK_THROWS_AS(m.predict(Eigen::MatrixXd::Zero(2, 4)), DimensionError);
}

TEST_CASE("configuration validation and tuning ranges") {
  GbtConfig c;
  CHECK_NOTHROW(c.check_tuning_ranges());
  auto bad = c;
  bad.max_depth = 10;
  CHECK_THROWS_AS(bad.check_tuning_ranges(), ConfigError);
  bad = c;
  bad.learning_rate = 0.2;
  CHECK_THROWS_AS(bad.check_tuning_ranges(), ConfigError);
  bad = c;
  bad.subsample = 0.95;
  CHECK_THROWS_AS(bad.check_tuning_ranges(), ConfigError);
  bad = c;
  bad.min_child_weight = 6.0;
  CHECK_THROWS_AS(bad.check_tuning_ranges(), ConfigError);
  bad = c;
  bad.subsample = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 1);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(fit(x, y, c), DimensionError);
  y = Eigen::VectorXd::Zero(3);
  x(0, 0) = std::nan("");
  CHECK_THROWS_AS(fit(x, y, c), DomainError);
}

TEST_CASE("a constant target stops after the base score") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 2);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 7.0);
  const auto m = fit(x, y, plain(3, 50, 0.1));
  CHECK(m.trees().empty());
  CHECK(m.predict(x).isApproxToConstant(7.0));
}
