#include <doctest.h>

#include <filesystem>
#include <random>

#include "hurricast/cube_store.hpp"
#include "hurricast/errors.hpp"
#include "hurricast/io.hpp"
#include "hurricast/storm_data.hpp"
#include "hurricast/tensor.hpp"

using namespace hurricast;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hurricast_test_tensor_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Direct sum over the contracted index.
Tensor4d naive_mode_product(const Tensor4d& t, const Eigen::MatrixXd& m, int mode) {
  auto dims = t.dims();
  dims[mode - 1] = m.rows();
  Tensor4d out(dims);
  for (Eigen::Index a = 0; a < dims[0]; ++a)
    for (Eigen::Index b = 0; b < dims[1]; ++b)
      for (Eigen::Index c = 0; c < dims[2]; ++c)
        for (Eigen::Index d = 0; d < dims[3]; ++d) {
          std::array<Eigen::Index, 4> idx{a, b, c, d};
          double s = 0.0;
          for (Eigen::Index k = 0; k < t.dim(mode - 1); ++k) {
            auto src = idx;
            src[mode - 1] = k;
            s += m(idx[mode - 1], k) * t(src[0], src[1], src[2], src[3]);
          }
          out(a, b, c, d) = s;
        }
  return out;
}

}  // namespace

TEST_CASE("unfold places mode-n fibers in columns and fold inverts it") {
  std::mt19937_64 rng(1);
  const Tensor4d t = Tensor4d::Random({2, 3, 4, 5}, rng);
  for (int mode = 1; mode <= 4; ++mode) {
    const auto m = unfold(t, mode);
    CHECK(m.rows() == t.dim(mode - 1));
    CHECK(m.cols() == t.size() / t.dim(mode - 1));
    CHECK((fold(m, mode, t.dims()).data() - t.data()).norm() == 0.0);
  }
  const auto m2 = unfold(t, 2);
  // Column index enumerates (i1, i3, i4) in C order.
  CHECK(m2(1, (1 * 4 + 2) * 5 + 3) == t(1, 1, 2, 3));
  CHECK_THROWS_AS(unfold(t, 5), DimensionError);
}

TEST_CASE("mode product matches a direct summation") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor4d t = Tensor4d::Random({2, 3, 3, 4}, rng);
    for (int mode = 1; mode <= 4; ++mode) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Random(trial % 3 + 1, t.dim(mode - 1));
      const auto fast = mode_n_product(t, m, mode);
      const auto slow = naive_mode_product(t, m, mode);
      CHECK(fast.dims() == slow.dims());
      CHECK((fast.data() - slow.data()).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  const Tensor4d t = Tensor4d::Random({2, 3, 3, 4}, rng);
  CHECK_THROWS_AS(mode_n_product(t, Eigen::MatrixXd::Ones(2, 5), 1), DimensionError);
}

TEST_CASE("full-rank HOSVD reconstructs the tensor") {
  std::mt19937_64 rng(3);
  const Tensor4d t = Tensor4d::Random({3, 4, 5, 2}, rng);
  for (auto method : {SvdMethod::Gram, SvdMethod::Svd}) {
    const auto f = tucker(t, {3, 4, 5, 2}, method);
    CHECK((reconstruct(f).data() - t.data()).norm() / t.norm() < 1e-9);
  }
}

TEST_CASE("truncated HOSVD obeys the discarded-energy bound and has orthonormal factors") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> dim(2, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor4d::Dims dims{dim(rng), dim(rng), dim(rng), dim(rng)};
    const Tensor4d t = Tensor4d::Random(dims, rng);
    TuckerRanks ranks;
    double bound = 0.0;
    for (int n = 0; n < 4; ++n) {
      ranks[n] = std::uniform_int_distribution<Eigen::Index>(1, dims[n])(rng);
      const auto basis = mode_basis(t, n + 1);
      for (Eigen::Index i = ranks[n]; i < basis.singular_values.size(); ++i) {
        bound += basis.singular_values[i] * basis.singular_values[i];
      }
    }
    const auto f = tucker(t, ranks);
    const double err2 = (reconstruct(f).data() - t.data()).squaredNorm();
    CHECK(err2 <= bound * (1 + 1e-9) + 1e-12);
    for (int n = 0; n < 4; ++n) {
      const auto& u = f.factors[n];
      const Eigen::MatrixXd gram = u.transpose() * u;
      CHECK((gram - Eigen::MatrixXd::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("gram and svd bases agree") {
  std::mt19937_64 rng(5);
  const Tensor4d t = Tensor4d::Random({4, 3, 6, 5}, rng);
  for (int mode = 1; mode <= 4; ++mode) {
    const auto a = mode_basis(t, mode, SvdMethod::Gram);
    const auto b = mode_basis(t, mode, SvdMethod::Svd);
    const auto k = std::min(a.singular_values.size(), b.singular_values.size());
    CHECK((a.singular_values.head(k) - b.singular_values.head(k)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.vectors.leftCols(k) - b.vectors.leftCols(k)).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("invalid ranks are rejected") {
  std::mt19937_64 rng(6);
  const Tensor4d t = Tensor4d::Random({2, 3, 4, 5}, rng);
  CHECK_THROWS_AS(tucker(t, {0, 1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(tucker(t, {3, 1, 1, 1}), DimensionError);
}

TEST_CASE("vision features have 135 entries and are deterministic") {
  std::mt19937_64 rng(7);
  const Tensor4f cube = Tensor4f::Random(kCubeDims, rng);
  const auto a = extract_vision_features(cube);
  CHECK(a.size() == 135);
  CHECK(a == extract_vision_features(cube));
  // The core keeps the energy captured by the leading subspaces.
  CHECK(a.norm() <= cube.cast<double>().norm() + 1e-6);
  CHECK_THROWS_AS(extract_vision_features(Tensor4f::Random({8, 9, 24, 25}, rng)), DimensionError);
}

TEST_CASE("HCUB round trip and error handling") {
  std::mt19937_64 rng(8);
  const Tensor4f t = Tensor4f::Random({2, 9, 25, 25}, rng);
  const auto bytes = encode_hcub(t);
  CHECK(bytes.size() == 4 + 2 + 16 + 4 * static_cast<std::size_t>(t.size()));
  const auto back = decode_hcub(bytes);
  CHECK(back.dims() == t.dims());
  CHECK(back.data() == t.data());

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_hcub(bad), FormatError);
  bad = bytes;
  bad[4] = 7;
  CHECK_THROWS_AS(decode_hcub(bad), VersionError);
  bad = bytes;
  bad.resize(bad.size() - 1);
  CHECK_THROWS_AS(decode_hcub(bad), CorruptionError);

  const auto dir = scratch("hcub");
  write_hcub(dir / "a.hcub", t);
  CHECK(read_hcub(dir / "a.hcub").data() == t.data());
  std::filesystem::remove_all(dir);
}

TEST_CASE("cube store windows, naming and channel statistics") {
  std::mt19937_64 rng(9);
  const auto t0 = parse_iso8601("2010-08-01T21:00:00Z");
  Tensor4f slices = Tensor4f::Random({10, 9, 25, 25}, rng);
  CubeStore store;
  store.insert("2010S0001", t0, slices);
  CHECK(CubeStore::file_name("2010S0001", t0) == "2010S0001_20100801T210000Z.hcub");
  CHECK(store.has("2010S0001", t0 - hours{27}));
  CHECK_FALSE(store.has("2010S0001", t0 - hours{30}));
  CHECK_FALSE(store.has("2010S0001", t0 + hours{3}));

  const auto w = store.window("2010S0001", t0 - hours{3});
  CHECK(w.dims() == kCubeDims);
  CHECK(w(0, 4, 3, 2) == slices(1, 4, 3, 2));
  CHECK(w(7, 8, 24, 24) == slices(8, 8, 24, 24));
  CHECK_THROWS_AS(store.window("2010S0001", t0 - hours{9}), std::out_of_range);
  CHECK_THROWS_AS(store.window("nope", t0), std::out_of_range);

  storm::ForecastCase c;
  c.storm_id = "2010S0001";
  c.t0 = t0;
  const std::vector<storm::ForecastCase> cases{c};
  const auto stats = store.channel_stats(cases);
  REQUIRE(stats.mean.size() == 9);
  const auto z = standardize_channels(store.window("2010S0001", t0), stats);
  for (int ch = 0; ch < 9; ++ch) {
    double s = 0, ss = 0;
    for (int k = 0; k < 8; ++k)
      for (int i = 0; i < 25; ++i)
        for (int j = 0; j < 25; ++j) {
          s += z(k, ch, i, j);
          ss += double(z(k, ch, i, j)) * z(k, ch, i, j);
        }
    const double n = 8 * 625;
    CHECK(std::abs(s / n) < 1e-4);
    CHECK(ss / n == doctest::Approx(1.0).epsilon(1e-3));
  }
  const auto st = store.standardized(stats);
  CHECK((st.window("2010S0001", t0).data() - z.data()).cwiseAbs().maxCoeff() < 1e-6);

  const auto dir = scratch("store");
  store.save_directory(dir);
  const auto loaded = CubeStore::load_directory(dir);
  CHECK(loaded.entry_count() == 1);
  CHECK(loaded.slice_count() == 10);
  CHECK(loaded.window("2010S0001", t0).data() == store.window("2010S0001", t0).data());
  io::write_file(dir / "junk.hcub", encode_hcub(slices));
  CHECK_THROWS_AS(CubeStore::load_directory(dir), FormatError);
  std::filesystem::remove_all(dir);
}
