#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <filesystem>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hurricast/errors.hpp"

namespace hurricast {

/// Dense 4-way tensor in C order (last index fastest).
template <typename Scalar_>
class Tensor4 {
 public:
  using Scalar = Scalar_;
  using Index = Eigen::Index;
  using Dims = std::array<Index, 4>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Tensor4() : dims_{0, 0, 0, 0} {}
  explicit Tensor4(const Dims& dims) : dims_(dims), data_(Vector::Zero(count(dims))) {}
  Tensor4(const Dims& dims, Vector data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != count(dims_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match dims product " +
                           std::to_string(count(dims_)));
    }
  }

  static Tensor4 Zero(const Dims& dims) { return Tensor4(dims); }

  template <typename Rng>
  static Tensor4 Random(const Dims& dims, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector v(count(dims));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(nd(rng));
    return Tensor4(dims, std::move(v));
  }

  static Index count(const Dims& d) {
    for (Index x : d) {
      if (x <= 0) throw DimensionError("tensor dims must be positive");
    }
    return d[0] * d[1] * d[2] * d[3];
  }

  const Dims& dims() const { return dims_; }
  Index dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index size() const { return data_.size(); }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  Scalar& operator()(Index i, Index j, Index k, Index l) { return data_[offset(i, j, k, l)]; }
  Scalar operator()(Index i, Index j, Index k, Index l) const { return data_[offset(i, j, k, l)]; }

  Index offset(Index i, Index j, Index k, Index l) const {
    return ((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
  }

  Scalar norm() const { return data_.norm(); }

  template <typename Other>
  Tensor4<Other> cast() const {
    return Tensor4<Other>(dims_, data_.template cast<Other>());
  }

  Tensor4 operator*(Scalar s) const { return Tensor4(dims_, data_ * s); }
  Tensor4 operator-(const Tensor4& o) const {
    if (o.dims_ != dims_) throw DimensionError("tensor subtraction with mismatched dims");
    return Tensor4(dims_, data_ - o.data_);
  }

 private:
  Dims dims_;
  Vector data_;
};

using Tensor4d = Tensor4<double>;
using Tensor4f = Tensor4<float>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

inline void check_mode(int mode) {
  if (mode < 1 || mode > 4) throw DimensionError("tensor mode must be in 1..4, got " + std::to_string(mode));
}

// A C-order tensor seen along `mode` is `outer` row-major slabs of shape
// (I_mode x inner).
template <typename Dims>
std::pair<Eigen::Index, Eigen::Index> outer_inner(const Dims& d, int mode) {
  Eigen::Index outer = 1, inner = 1;
  for (int m = 0; m < mode - 1; ++m) outer *= d[static_cast<std::size_t>(m)];
  for (int m = mode; m < 4; ++m) inner *= d[static_cast<std::size_t>(m)];
  return {outer, inner};
}

}  // namespace detail

/// Mode-n unfolding, n in 1..4. Rows index mode n; columns enumerate the
/// remaining indices in C order.
template <typename Scalar>
MatrixX<Scalar> unfold(const Tensor4<Scalar>& t, int mode) {
  detail::check_mode(mode);
  const auto In = t.dim(mode - 1);
  auto [outer, inner] = detail::outer_inner(t.dims(), mode);
  MatrixX<Scalar> m(In, outer * inner);
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<const RowMajorMatrixX<Scalar>> slab(t.data().data() + o * In * inner, In, inner);
    m.middleCols(o * inner, inner) = slab;
  }
  return m;
}

/// Inverse of unfold.
template <typename Derived>
Tensor4<typename Derived::Scalar> fold(const Eigen::MatrixBase<Derived>& m, int mode,
                                       const typename Tensor4<typename Derived::Scalar>::Dims& dims) {
  using Scalar = typename Derived::Scalar;
  detail::check_mode(mode);
  const auto In = dims[static_cast<std::size_t>(mode - 1)];
  auto [outer, inner] = detail::outer_inner(dims, mode);
  if (m.rows() != In || m.cols() != outer * inner) {
    throw DimensionError("fold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " inconsistent with mode-" + std::to_string(mode) + " unfolding of target dims");
  }
  Tensor4<Scalar> t(dims);
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<RowMajorMatrixX<Scalar>> slab(t.data().data() + o * In * inner, In, inner);
    slab = m.middleCols(o * inner, inner);
  }
  return t;
}

/// t x_n M for M of shape (J x I_n); the result has I_n replaced by J.
template <typename Scalar, typename Derived>
Tensor4<Scalar> mode_n_product(const Tensor4<Scalar>& t, const Eigen::MatrixBase<Derived>& m, int mode) {
  detail::check_mode(mode);
  const auto In = t.dim(mode - 1);
  if (m.cols() != In) {
    throw DimensionError("mode-" + std::to_string(mode) + " product: matrix has " + std::to_string(m.cols()) +
                         " columns, tensor mode has size " + std::to_string(In));
  }
  auto dims = t.dims();
  dims[static_cast<std::size_t>(mode - 1)] = m.rows();
  auto [outer, inner] = detail::outer_inner(t.dims(), mode);
  Tensor4<Scalar> out(dims);
  const MatrixX<Scalar> mm = m.template cast<Scalar>();
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<const RowMajorMatrixX<Scalar>> src(t.data().data() + o * In * inner, In, inner);
    Eigen::Map<RowMajorMatrixX<Scalar>> dst(out.data().data() + o * m.rows() * inner, m.rows(), inner);
    dst.noalias() = mm * src;
  }
  return out;
}

/// Gram matrix of the mode-n unfolding, A_(n) A_(n)^T, without materializing it.
template <typename Scalar>
MatrixX<Scalar> mode_gram(const Tensor4<Scalar>& t, int mode) {
  detail::check_mode(mode);
  const auto In = t.dim(mode - 1);
  auto [outer, inner] = detail::outer_inner(t.dims(), mode);
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(In, In);
  for (Eigen::Index o = 0; o < outer; ++o) {
    Eigen::Map<const RowMajorMatrixX<Scalar>> slab(t.data().data() + o * In * inner, In, inner);
    g.template selfadjointView<Eigen::Lower>().rankUpdate(slab);
  }
  return g.template selfadjointView<Eigen::Lower>();
}

/// Flips each column so its largest-magnitude entry is positive (first one on ties).
template <typename Derived>
void canonicalize_signs(Eigen::MatrixBase<Derived>& u) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index arg = 0;
    typename Derived::Scalar best = -1;
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
      auto a = std::abs(u(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (u(arg, c) < 0) u.col(c) = -u.col(c);
  }
}

enum class SvdMethod {
  Auto,  ///< Gram eigendecomposition when I_n <= 64, thin SVD otherwise.
  Gram,
  Svd,
};

template <typename Scalar>
struct ModeBasis {
  MatrixX<Scalar> vectors;  // I_n x I_n (or I_n x min(I_n, cols) for SVD), descending
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> singular_values;
};

/// Left singular vectors and singular values of the mode-n unfolding.
template <typename Scalar>
ModeBasis<Scalar> mode_basis(const Tensor4<Scalar>& t, int mode, SvdMethod method = SvdMethod::Auto) {
  detail::check_mode(mode);
  const auto In = t.dim(mode - 1);
  if (method == SvdMethod::Auto) method = In <= 64 ? SvdMethod::Gram : SvdMethod::Svd;
  ModeBasis<Scalar> b;
  if (method == SvdMethod::Gram) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(mode_gram(t, mode));
    if (es.info() != Eigen::Success) {
      throw NumericalError("eigendecomposition failed for mode " + std::to_string(mode));
    }
    // Eigen sorts ascending.
    b.vectors = es.eigenvectors().rowwise().reverse();
    b.singular_values = es.eigenvalues().reverse().cwiseMax(Scalar(0)).cwiseSqrt();
  } else {
    Eigen::BDCSVD<MatrixX<Scalar>> svd(unfold(t, mode), Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw NumericalError("SVD failed for mode " + std::to_string(mode));
    b.vectors = svd.matrixU();
    b.singular_values = svd.singularValues();
  }
  canonicalize_signs(b.vectors);
  return b;
}

using TuckerRanks = std::array<Eigen::Index, 4>;

template <typename Scalar>
struct TuckerFactorization {
  Tensor4<Scalar> core;
  std::array<MatrixX<Scalar>, 4> factors;  // factors[n] is I_n x k_n with orthonormal columns
};

/// Truncated multilinear SVD (HOSVD).
template <typename Scalar>
TuckerFactorization<Scalar> tucker(const Tensor4<Scalar>& t, const TuckerRanks& ranks,
                                   SvdMethod method = SvdMethod::Auto) {
  TuckerFactorization<Scalar> f;
  for (int n = 0; n < 4; ++n) {
    const auto In = t.dim(n);
    const auto k = ranks[static_cast<std::size_t>(n)];
    if (k < 1 || k > In) {
      throw DimensionError("Tucker rank " + std::to_string(k) + " for mode " + std::to_string(n + 1) +
                           " must lie in [1, " + std::to_string(In) + "]");
    }
    auto basis = mode_basis(t, n + 1, method);
    if (basis.vectors.cols() < k) {
      throw DimensionError("mode " + std::to_string(n + 1) + " unfolding has only " +
                           std::to_string(basis.vectors.cols()) + " singular vectors");
    }
    f.factors[static_cast<std::size_t>(n)] = basis.vectors.leftCols(k);
  }
  Tensor4<Scalar> core = t;
  for (int n = 0; n < 4; ++n) core = mode_n_product(core, f.factors[static_cast<std::size_t>(n)].transpose(), n + 1);
  f.core = std::move(core);
  return f;
}

/// core x_1 U1 x_2 U2 x_3 U3 x_4 U4.
template <typename Scalar>
Tensor4<Scalar> reconstruct(const TuckerFactorization<Scalar>& f) {
  Tensor4<Scalar> t = f.core;
  for (int n = 0; n < 4; ++n) {
    const auto& u = f.factors[static_cast<std::size_t>(n)];
    if (u.cols() != t.dim(n)) throw DimensionError("factor/core mismatch on mode " + std::to_string(n + 1));
    t = mode_n_product(t, u, n + 1);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reanalysis cubes
// ---------------------------------------------------------------------------

inline constexpr Tensor4f::Dims kCubeDims = {8, 9, 25, 25};
inline constexpr TuckerRanks kVisionRanks = {3, 5, 3, 3};
inline constexpr Eigen::Index kVisionFeatureCount = 3 * 5 * 3 * 3;

/// Flattened (3,5,3,3) HOSVD core of an (8,9,25,25) window.
Eigen::VectorXd extract_vision_features(const Tensor4d& cube);
Eigen::VectorXd extract_vision_features(const Tensor4f& cube);

/// HCUB: "HCUB", u16 version, four u32 dims, float32 payload, all little-endian.
inline constexpr std::uint16_t kHcubVersion = 1;
void write_hcub(const std::filesystem::path& path, const Tensor4f& t);
Tensor4f read_hcub(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_hcub(const Tensor4f& t);
Tensor4f decode_hcub(std::span<const std::uint8_t> bytes);

}  // namespace hurricast
