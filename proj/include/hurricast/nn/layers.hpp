#pragma once

// Differentiable building blocks. Every layer caches what its backward pass
// needs from the most recent forward call, accumulates parameter gradients
// with +=, and returns the gradient with respect to its input.
//
// Layouts (column-major Eigen):
//   Image<T>  rows = channels, column (n * H + y) * W + x for image n.
//   sequences rows = features, column t * B + b (time-major).

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "hurricast/errors.hpp"

namespace hurricast::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool penalized = false;  // included in the L2 term
  bool trainable = true;   // false for running statistics

  void resize(Eigen::Index r, Eigen::Index c) {
    value = Mat<T>::Zero(r, c);
    grad = Mat<T>::Zero(r, c);
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

template <typename T>
void init_uniform(Mat<T>& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
}

/// Orthogonal n x n matrix from the QR factorization of a Gaussian draw.
template <typename T>
Mat<T> random_orthogonal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd d = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (d[j] < 0) q.col(j) = -q.col(j);
  }
  return q.cast<T>();
}

template <typename T>
struct Image {
  Mat<T> data;  // channels x (batch * height * width)
  int batch = 0;
  int height = 0;
  int width = 0;

  Eigen::Index channels() const { return data.rows(); }
};

// ---------------------------------------------------------------------------

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(const std::string& name, int in, int out, Rng& rng) {
    w_.name = name + ".weight";
    w_.penalized = true;
    w_.resize(out, in);
    b_.name = name + ".bias";
    b_.resize(out, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    init_uniform(w_.value, bound, rng);
    init_uniform(b_.value, bound, rng);
  }

  Mat<T> forward(const Mat<T>& x) {
    if (x.rows() != w_.value.cols()) {
      throw DimensionError(w_.name + ": expected " + std::to_string(w_.value.cols()) + " inputs, got " +
                           std::to_string(x.rows()));
    }
    x_ = x;
    return infer(x);
  }
  Mat<T> infer(const Mat<T>& x) const {
    Mat<T> y = w_.value * x;
    y.colwise() += b_.value.col(0);
    return y;
  }
  Mat<T> backward(const Mat<T>& dy) {
    w_.grad.noalias() += dy * x_.transpose();
    b_.grad += dy.rowwise().sum();
    return w_.value.transpose() * dy;
  }

  void params(ParamList<T>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }
  int in() const { return static_cast<int>(w_.value.cols()); }
  int out() const { return static_cast<int>(w_.value.rows()); }

 private:
  Param<T> w_, b_;
  Mat<T> x_;
};

template <typename T>
class Relu {
 public:
  Mat<T> forward(const Mat<T>& x) {
    mask_ = (x.array() > T(0)).template cast<T>();
    return x.cwiseMax(T(0));
  }
  static Mat<T> infer(const Mat<T>& x) { return x.cwiseMax(T(0)); }
  Mat<T> backward(const Mat<T>& dy) const { return dy.cwiseProduct(mask_); }

 private:
  Mat<T> mask_;
};

// ---------------------------------------------------------------------------

/// Valid (unpadded) stride-1 convolution via im2col.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, Rng& rng)
      : cin_(in_channels), k_(kernel) {
    w_.name = name + ".weight";
    w_.penalized = true;
    w_.resize(out_channels, in_channels * kernel * kernel);
    b_.name = name + ".bias";
    b_.resize(out_channels, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_channels * kernel * kernel));
    init_uniform(w_.value, bound, rng);
    init_uniform(b_.value, bound, rng);
  }

  static int output_size(int in, int kernel) { return in - kernel + 1; }

  Image<T> forward(const Image<T>& x) {
    check(x);
    cols_ = im2col(x);
    in_shape_.batch = x.batch;
    in_shape_.height = x.height;
    in_shape_.width = x.width;
    return apply(cols_, x);
  }

  Image<T> infer(const Image<T>& x) const {
    check(x);
    return apply(im2col(x), x);
  }

  /// Returns the input gradient only when `need_input_grad`.
  Image<T> backward(const Image<T>& dy, bool need_input_grad = true) {
    w_.grad.noalias() += dy.data * cols_.transpose();
    b_.grad += dy.data.rowwise().sum();
    Image<T> dx;
    dx.batch = in_shape_.batch;
    dx.height = in_shape_.height;
    dx.width = in_shape_.width;
    if (!need_input_grad) return dx;
    Mat<T> dcols = w_.value.transpose() * dy.data;
    dx.data = Mat<T>::Zero(cin_, static_cast<Eigen::Index>(dx.batch) * dx.height * dx.width);
    col2im(dcols, dx);
    return dx;
  }

  void params(ParamList<T>& out) {
    out.push_back(&w_);
    out.push_back(&b_);
  }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }
  int out_channels() const { return static_cast<int>(w_.value.rows()); }

 private:
  Image<T> apply(const Mat<T>& cols, const Image<T>& x) const {
    Image<T> y;
    y.batch = x.batch;
    y.height = output_size(x.height, k_);
    y.width = output_size(x.width, k_);
    y.data.noalias() = w_.value * cols;
    y.data.colwise() += b_.value.col(0);
    return y;
  }

  void check(const Image<T>& x) const {
    if (x.channels() != cin_) {
      throw DimensionError(w_.name + ": expected " + std::to_string(cin_) + " channels, got " +
                           std::to_string(x.channels()));
    }
    if (x.height < k_ || x.width < k_) throw DimensionError(w_.name + ": input smaller than kernel");
  }

  Mat<T> im2col(const Image<T>& x) const {
    const int ho = output_size(x.height, k_), wo = output_size(x.width, k_);
    const Eigen::Index rows = static_cast<Eigen::Index>(cin_) * k_ * k_;
    Mat<T> cols(rows, static_cast<Eigen::Index>(x.batch) * ho * wo);
    const T* src = x.data.data();
    T* dst = cols.data();
    for (int n = 0; n < x.batch; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            const T* row = src + ((static_cast<Eigen::Index>(n) * x.height + oy + ky) * x.width + ox) * cin_;
            std::memcpy(dst, row, sizeof(T) * cin_ * k_);
            dst += cin_ * k_;
          }
        }
      }
    }
    return cols;
  }

  void col2im(const Mat<T>& dcols, Image<T>& dx) const {
    const int ho = output_size(dx.height, k_), wo = output_size(dx.width, k_);
    const T* src = dcols.data();
    T* base = dx.data.data();
    for (int n = 0; n < dx.batch; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            T* row = base + ((static_cast<Eigen::Index>(n) * dx.height + oy + ky) * dx.width + ox) * cin_;
            for (int i = 0; i < cin_ * k_; ++i) row[i] += src[i];
            src += cin_ * k_;
          }
        }
      }
    }
  }

  int cin_ = 0;
  int k_ = 3;
  Param<T> w_, b_;
  Mat<T> cols_;
  Image<T> in_shape_;
};

/// Non-overlapping max pooling with floor output size.
template <typename T>
class MaxPool2d {
 public:
  explicit MaxPool2d(int kernel = 2) : k_(kernel) {}

  static int output_size(int in, int kernel) { return in / kernel; }

  Image<T> forward(const Image<T>& x) {
    in_cols_ = x.data.cols();
    in_h_ = x.height;
    in_w_ = x.width;
    return run(x, &argmax_);
  }
  Image<T> infer(const Image<T>& x) const { return run(x, nullptr); }

  Image<T> backward(const Image<T>& dy) const {
    Image<T> dx;
    dx.batch = dy.batch;
    dx.height = in_h_;
    dx.width = in_w_;
    dx.data = Mat<T>::Zero(dy.data.rows(), in_cols_);
    for (Eigen::Index j = 0; j < dy.data.cols(); ++j) {
      for (Eigen::Index ch = 0; ch < dy.data.rows(); ++ch) dx.data(ch, argmax_(ch, j)) += dy.data(ch, j);
    }
    return dx;
  }

 private:
  using IndexMat = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

  Image<T> run(const Image<T>& x, IndexMat* argmax) const {
    const bool keep_cache = argmax != nullptr;
    const int ho = output_size(x.height, k_), wo = output_size(x.width, k_);
    if (ho < 1 || wo < 1) throw DimensionError("maxpool: input smaller than window");
    const Eigen::Index c = x.channels();
    Image<T> y;
    y.batch = x.batch;
    y.height = ho;
    y.width = wo;
    y.data.resize(c, static_cast<Eigen::Index>(x.batch) * ho * wo);
    if (keep_cache) argmax->resize(c, y.data.cols());
    for (int n = 0; n < x.batch; ++n) {
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const Eigen::Index out_col = (static_cast<Eigen::Index>(n) * ho + oy) * wo + ox;
          for (Eigen::Index ch = 0; ch < c; ++ch) {
            T best = -std::numeric_limits<T>::infinity();
            Eigen::Index arg = 0;
            for (int ky = 0; ky < k_; ++ky) {
              for (int kx = 0; kx < k_; ++kx) {
                const Eigen::Index col =
                    (static_cast<Eigen::Index>(n) * x.height + oy * k_ + ky) * x.width + ox * k_ + kx;
                const T v = x.data(ch, col);
                if (v > best) {
                  best = v;
                  arg = col;
                }
              }
            }
            y.data(ch, out_col) = best;
            if (keep_cache) (*argmax)(ch, out_col) = arg;
          }
        }
      }
    }
    return y;
  }

  int k_;
  IndexMat argmax_;
  Eigen::Index in_cols_ = 0;
  int in_h_ = 0, in_w_ = 0;
};

/// Normalizes each row (channel) over all columns. Running statistics follow
/// running = (1 - momentum) * running + momentum * batch, with the unbiased
/// batch variance.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma_.name = name + ".gamma";
    gamma_.resize(channels, 1);
    gamma_.value.setOnes();
    beta_.name = name + ".beta";
    beta_.resize(channels, 1);
    running_mean_.name = name + ".running_mean";
    running_mean_.resize(channels, 1);
    running_mean_.trainable = false;
    running_var_.name = name + ".running_var";
    running_var_.resize(channels, 1);
    running_var_.value.setOnes();
    running_var_.trainable = false;
  }

  Mat<T> forward(const Mat<T>& x, bool train) {
    if (!train) return infer(x);
    const auto m = static_cast<double>(x.cols());
    if (m < 2) throw DimensionError(gamma_.name + ": batch statistics need at least two values per channel");
    Vec<T> mean = x.rowwise().mean();
    Mat<T> centered = x.colwise() - mean;
    Vec<T> var = centered.cwiseAbs2().rowwise().mean();
    inv_std_ = (var.array() + T(eps_)).rsqrt().matrix();
    xhat_ = inv_std_.asDiagonal() * centered;
    const T mom = T(momentum_);
    running_mean_.value.col(0) = (T(1) - mom) * running_mean_.value.col(0) + mom * mean;
    running_var_.value.col(0) = (T(1) - mom) * running_var_.value.col(0) + mom * var * T(m / (m - 1));
    Mat<T> y = gamma_.value.col(0).asDiagonal() * xhat_;
    y.colwise() += beta_.value.col(0);
    return y;
  }

  Mat<T> infer(const Mat<T>& x) const {
    Vec<T> scale = gamma_.value.col(0).array() * (running_var_.value.col(0).array() + T(eps_)).rsqrt();
    Vec<T> shift = beta_.value.col(0).array() - running_mean_.value.col(0).array() * scale.array();
    Mat<T> y = scale.asDiagonal() * x;
    y.colwise() += shift;
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    const T m = T(dy.cols());
    gamma_.grad.col(0) += dy.cwiseProduct(xhat_).rowwise().sum();
    beta_.grad.col(0) += dy.rowwise().sum();
    Mat<T> dxhat = gamma_.value.col(0).asDiagonal() * dy;
    Vec<T> sum_d = dxhat.rowwise().sum();
    Vec<T> sum_dx = dxhat.cwiseProduct(xhat_).rowwise().sum();
    Mat<T> dx = (m * dxhat).colwise() - sum_d;
    dx -= sum_dx.asDiagonal() * xhat_;
    return (inv_std_ / m).asDiagonal() * dx;
  }

  void params(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }
  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  Param<T>& running_mean() { return running_mean_; }
  Param<T>& running_var() { return running_var_; }

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  Mat<T> xhat_;
  Vec<T> inv_std_;
};

/// Normalizes each column over its rows (feature dimension).
template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim, double eps = 1e-5) : eps_(eps) {
    gamma_.name = name + ".gamma";
    gamma_.resize(dim, 1);
    gamma_.value.setOnes();
    beta_.name = name + ".beta";
    beta_.resize(dim, 1);
  }

  Mat<T> forward(const Mat<T>& x) { return run(x, &xhat_, &inv_std_); }
  Mat<T> infer(const Mat<T>& x) const {
    Mat<T> xhat;
    RowVec inv_std;
    return run(x, &xhat, &inv_std);
  }

  Mat<T> backward(const Mat<T>& dy) {
    const T d = T(dy.rows());
    gamma_.grad.col(0) += dy.cwiseProduct(xhat_).rowwise().sum();
    beta_.grad.col(0) += dy.rowwise().sum();
    Mat<T> dxhat = gamma_.value.col(0).asDiagonal() * dy;
    Eigen::Matrix<T, 1, Eigen::Dynamic> sum_d = dxhat.colwise().sum();
    Eigen::Matrix<T, 1, Eigen::Dynamic> sum_dx = dxhat.cwiseProduct(xhat_).colwise().sum();
    Mat<T> dx = (d * dxhat).rowwise() - sum_d;
    dx -= xhat_ * sum_dx.asDiagonal();
    return dx * (inv_std_ / d).asDiagonal();
  }

  void params(ParamList<T>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

 private:
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  Mat<T> run(const Mat<T>& x, Mat<T>* xhat, RowVec* inv_std) const {
    if (x.rows() != gamma_.value.rows()) throw DimensionError(gamma_.name + ": feature size mismatch");
    RowVec mean = x.colwise().mean();
    Mat<T> centered = x.rowwise() - mean;
    RowVec var = centered.cwiseAbs2().colwise().mean();
    *inv_std = (var.array() + T(eps_)).rsqrt().matrix();
    *xhat = centered * inv_std->asDiagonal();
    Mat<T> y = gamma_.value.col(0).asDiagonal() * *xhat;
    y.colwise() += beta_.value.col(0);
    return y;
  }

  double eps_ = 1e-5;
  Param<T> gamma_, beta_;
  Mat<T> xhat_;
  RowVec inv_std_;
};

// ---------------------------------------------------------------------------

/// Single-layer GRU with the gate equations
///   r = s(W_ir x + b_ir + W_hr h + b_hr)
///   z = s(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
/// and h_0 = 0. Gate blocks are stacked (r, z, n) along the rows.
template <typename T>
class Gru {
 public:
  Gru() = default;
  Gru(const std::string& name, int input, int hidden, Rng& rng) : hidden_(hidden) {
    wi_.name = name + ".weight_ih";
    wi_.penalized = true;
    wi_.resize(3 * hidden, input);
    wh_.name = name + ".weight_hh";
    wh_.penalized = true;
    wh_.resize(3 * hidden, hidden);
    bi_.name = name + ".bias_ih";
    bi_.resize(3 * hidden, 1);
    bh_.name = name + ".bias_hh";
    bh_.resize(3 * hidden, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    init_uniform(wi_.value, bound, rng);
    for (int g = 0; g < 3; ++g) wh_.value.middleRows(g * hidden, hidden) = random_orthogonal<T>(hidden, rng);
    init_uniform(bi_.value, bound, rng);
    init_uniform(bh_.value, bound, rng);
  }

  /// x: input x (steps * batch), time-major. Returns all hidden states,
  /// hidden x (steps * batch).
  Mat<T> forward(const Mat<T>& x, int steps) { return run(x, steps, &cache_); }
  Mat<T> infer(const Mat<T>& x, int steps) const { return run(x, steps, nullptr); }

  /// dh_out: gradient w.r.t. every hidden state output. Returns dL/dx.
  Mat<T> backward(const Mat<T>& dh_out) {
    const auto& c = cache_;
    const Eigen::Index b = c.x.cols() / c.steps;
    const Eigen::Index h = hidden_;
    Mat<T> dx(c.x.rows(), c.x.cols());
    Mat<T> dnext = Mat<T>::Zero(h, b);
    Mat<T> dgi(3 * h, b), dgh(3 * h, b);
    for (int t = c.steps - 1; t >= 0; --t) {
      Mat<T> hprev = t == 0 ? Mat<T>::Zero(h, b) : Mat<T>(c.h.middleCols((t - 1) * b, b));
      auto r = c.r.middleCols(t * b, b);
      auto z = c.z.middleCols(t * b, b);
      auto n = c.n.middleCols(t * b, b);
      auto ghn = c.ghn.middleCols(t * b, b);
      Mat<T> dh = dh_out.middleCols(t * b, b) + dnext;
      Mat<T> dn = dh.cwiseProduct((T(1) - z.array()).matrix());
      Mat<T> dz = dh.cwiseProduct(hprev - n);
      Mat<T> dan = (dn.array() * (T(1) - n.array().square())).matrix();
      Mat<T> dr = dan.cwiseProduct(ghn);
      dgi.topRows(h) = (dr.array() * r.array() * (T(1) - r.array())).matrix();
      dgi.middleRows(h, h) = (dz.array() * z.array() * (T(1) - z.array())).matrix();
      dgi.bottomRows(h) = dan;
      dgh.topRows(2 * h) = dgi.topRows(2 * h);
      dgh.bottomRows(h) = dan.cwiseProduct(r);
      wi_.grad.noalias() += dgi * c.x.middleCols(t * b, b).transpose();
      bi_.grad += dgi.rowwise().sum();
      wh_.grad.noalias() += dgh * hprev.transpose();
      bh_.grad += dgh.rowwise().sum();
      dx.middleCols(t * b, b).noalias() = wi_.value.transpose() * dgi;
      dnext = dh.cwiseProduct(z);
      dnext.noalias() += wh_.value.transpose() * dgh;
    }
    return dx;
  }

  void params(ParamList<T>& out) {
    out.push_back(&wi_);
    out.push_back(&wh_);
    out.push_back(&bi_);
    out.push_back(&bh_);
  }
  Param<T>& weight_ih() { return wi_; }
  Param<T>& weight_hh() { return wh_; }
  Param<T>& bias_ih() { return bi_; }
  Param<T>& bias_hh() { return bh_; }
  int hidden() const { return hidden_; }

 private:
  struct Cache {
    int steps = 0;
    Mat<T> x, h, r, z, n, ghn;
  };

  template <typename Derived>
  static Mat<T> sigmoid(const Eigen::MatrixBase<Derived>& a) {
    return (T(1) / (T(1) + (-a.array()).exp())).matrix();
  }

  Mat<T> run(const Mat<T>& x, int steps, Cache* cache) const {
    if (x.rows() != wi_.value.cols()) throw DimensionError(wi_.name + ": input size mismatch");
    if (steps <= 0 || x.cols() % steps != 0) throw DimensionError(wi_.name + ": columns not divisible by steps");
    const Eigen::Index b = x.cols() / steps;
    const Eigen::Index h = hidden_;
    Mat<T> out(h, x.cols());
    Mat<T> gi = wi_.value * x;
    gi.colwise() += bi_.value.col(0);
    if (cache) {
      cache->x = x;
      cache->steps = steps;
      cache->r.resize(h, x.cols());
      cache->z.resize(h, x.cols());
      cache->n.resize(h, x.cols());
      cache->ghn.resize(h, x.cols());
    }
    Mat<T> hprev = Mat<T>::Zero(h, b);
    for (int t = 0; t < steps; ++t) {
      Mat<T> gh = wh_.value * hprev;
      gh.colwise() += bh_.value.col(0);
      auto git = gi.middleCols(t * b, b);
      Mat<T> r = sigmoid(git.topRows(h) + gh.topRows(h));
      Mat<T> z = sigmoid(git.middleRows(h, h) + gh.middleRows(h, h));
      Mat<T> n = (git.bottomRows(h) + r.cwiseProduct(gh.bottomRows(h))).array().tanh().matrix();
      Mat<T> hn = (Mat<T>::Ones(h, b) - z).cwiseProduct(n) + z.cwiseProduct(hprev);
      out.middleCols(t * b, b) = hn;
      if (cache) {
        cache->r.middleCols(t * b, b) = r;
        cache->z.middleCols(t * b, b) = z;
        cache->n.middleCols(t * b, b) = n;
        cache->ghn.middleCols(t * b, b) = gh.bottomRows(h);
      }
      hprev = std::move(hn);
    }
    if (cache) cache->h = out;
    return out;
  }

  int hidden_ = 0;
  Param<T> wi_, wh_, bi_, bh_;
  Cache cache_;
};

// ---------------------------------------------------------------------------

/// Multi-head scaled dot-product self-attention (Q = K = V = input).
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int heads, Rng& rng)
      : dim_(dim), heads_(heads), q_(name + ".q", dim, dim, rng), k_(name + ".k", dim, dim, rng),
        v_(name + ".v", dim, dim, rng), o_(name + ".out", dim, dim, rng) {
    if (heads <= 0 || dim % heads != 0) throw ConfigError(name + ": model dim must be divisible by head count");
  }

  Mat<T> forward(const Mat<T>& x, int steps) {
    check(x, steps);
    steps_ = steps;
    batch_ = static_cast<int>(x.cols() / steps);
    qm_ = q_.forward(x);
    km_ = k_.forward(x);
    vm_ = v_.forward(x);
    return o_.forward(attend(qm_, km_, vm_, steps, &attn_));
  }

  /// Inference without caching. Attention weights go to `weights` when given.
  Mat<T> infer(const Mat<T>& x, int steps, std::vector<Mat<T>>* weights = nullptr) const {
    check(x, steps);
    std::vector<Mat<T>> local;
    return o_.infer(attend(q_.infer(x), k_.infer(x), v_.infer(x), steps, weights ? weights : &local));
  }

  Mat<T> backward(const Mat<T>& dy) {
    const int dh = dim_ / heads_;
    const T scale = T(1) / std::sqrt(T(dh));
    Mat<T> dctx = o_.backward(dy);
    Mat<T> dq(dim_, dy.cols()), dk(dim_, dy.cols()), dv(dim_, dy.cols());
    for (int b = 0; b < batch_; ++b) {
      for (int h = 0; h < heads_; ++h) {
        const Mat<T>& a = attn_[static_cast<std::size_t>(b) * heads_ + h];
        Mat<T> q = gather(qm_, b, h, steps_), k = gather(km_, b, h, steps_), v = gather(vm_, b, h, steps_);
        Mat<T> dout = gather(dctx, b, h, steps_);
        Mat<T> da = dout.transpose() * v;
        scatter(dv, dout * a, b, h, steps_);
        Vec<T> rows = da.cwiseProduct(a).rowwise().sum();
        Mat<T> ds = a.cwiseProduct(da.colwise() - rows) * scale;
        scatter(dq, k * ds.transpose(), b, h, steps_);
        scatter(dk, q * ds, b, h, steps_);
      }
    }
    return q_.backward(dq) + k_.backward(dk) + v_.backward(dv);
  }

  /// Attention weights (query x key) of sequence b, head h from the last forward.
  const Mat<T>& attention(int b, int h) const { return attn_.at(static_cast<std::size_t>(b) * heads_ + h); }

  void params(ParamList<T>& out) {
    q_.params(out);
    k_.params(out);
    v_.params(out);
    o_.params(out);
  }
  int heads() const { return heads_; }

 private:
  void check(const Mat<T>& x, int steps) const {
    if (x.rows() != dim_) throw DimensionError("attention: input dim mismatch");
    if (steps <= 0 || x.cols() % steps != 0) throw DimensionError("attention: columns not divisible by steps");
  }

  Mat<T> attend(const Mat<T>& qm, const Mat<T>& km, const Mat<T>& vm, int steps,
                std::vector<Mat<T>>* weights) const {
    const int batch = static_cast<int>(qm.cols() / steps);
    const int dh = dim_ / heads_;
    const T scale = T(1) / std::sqrt(T(dh));
    weights->assign(static_cast<std::size_t>(batch) * heads_, Mat<T>());
    Mat<T> ctx(dim_, qm.cols());
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads_; ++h) {
        Mat<T> q = gather(qm, b, h, steps), k = gather(km, b, h, steps), v = gather(vm, b, h, steps);
        Mat<T> s = (q.transpose() * k) * scale;  // query x key
        Vec<T> mx = s.rowwise().maxCoeff();
        Mat<T> a = (s.colwise() - mx).array().exp().matrix();
        Vec<T> sums = a.rowwise().sum();
        a = sums.cwiseInverse().asDiagonal() * a;
        scatter(ctx, v * a.transpose(), b, h, steps);
        (*weights)[static_cast<std::size_t>(b) * heads_ + h] = std::move(a);
      }
    }
    return ctx;
  }

  Mat<T> gather(const Mat<T>& m, int b, int h, int steps) const {
    const int dh = dim_ / heads_;
    const Eigen::Index batch = m.cols() / steps;
    Mat<T> out(dh, steps);
    for (int t = 0; t < steps; ++t) out.col(t) = m.block(h * dh, t * batch + b, dh, 1);
    return out;
  }
  void scatter(Mat<T>& m, const Mat<T>& src, int b, int h, int steps) const {
    const int dh = dim_ / heads_;
    const Eigen::Index batch = m.cols() / steps;
    for (int t = 0; t < steps; ++t) m.block(h * dh, t * batch + b, dh, 1) = src.col(t);
  }

  int dim_ = 0;
  int heads_ = 1;
  int steps_ = 0;
  int batch_ = 0;
  Dense<T> q_, k_, v_, o_;
  Mat<T> qm_, km_, vm_;
  std::vector<Mat<T>> attn_;
};

/// Post-norm encoder block: x1 = LN(x + MHA(x)), y = LN(x1 + FFN(x1)).
template <typename T>
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(const std::string& name, int dim, int heads, int ff, Rng& rng)
      : attn_(name + ".attn", dim, heads, rng), ln1_(name + ".ln1", dim), ff1_(name + ".ff1", dim, ff, rng),
        ff2_(name + ".ff2", ff, dim, rng), ln2_(name + ".ln2", dim) {}

  Mat<T> forward(const Mat<T>& x, int steps) {
    Mat<T> x1 = ln1_.forward(x + attn_.forward(x, steps));
    Mat<T> f = ff2_.forward(relu_.forward(ff1_.forward(x1)));
    return ln2_.forward(x1 + f);
  }

  Mat<T> infer(const Mat<T>& x, int steps, std::vector<Mat<T>>* weights = nullptr) const {
    Mat<T> x1 = ln1_.infer(x + attn_.infer(x, steps, weights));
    Mat<T> f = ff2_.infer(Relu<T>::infer(ff1_.infer(x1)));
    return ln2_.infer(x1 + f);
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> ds2 = ln2_.backward(dy);
    Mat<T> dx1 = ds2 + ff1_.backward(relu_.backward(ff2_.backward(ds2)));
    Mat<T> ds1 = ln1_.backward(dx1);
    return ds1 + attn_.backward(ds1);
  }

  void params(ParamList<T>& out) {
    attn_.params(out);
    ln1_.params(out);
    ff1_.params(out);
    ff2_.params(out);
    ln2_.params(out);
  }
  const MultiHeadAttention<T>& attention() const { return attn_; }

 private:
  MultiHeadAttention<T> attn_;
  LayerNorm<T> ln1_;
  Dense<T> ff1_, ff2_;
  Relu<T> relu_;
  LayerNorm<T> ln2_;
};

/// Average over the time steps of a time-major sequence.
template <typename T>
Mat<T> mean_pool(const Mat<T>& x, int steps) {
  const Eigen::Index b = x.cols() / steps;
  Mat<T> out = Mat<T>::Zero(x.rows(), b);
  for (int t = 0; t < steps; ++t) out += x.middleCols(t * b, b);
  return out / T(steps);
}

template <typename T>
Mat<T> mean_pool_backward(const Mat<T>& dy, int steps) {
  return dy.replicate(1, steps) / T(steps);
}

/// Sinusoidal position code: entry 2j is sin(i / 10000^(2j/d)) and entry
/// 2j+1 is cos of the same angle.
inline Eigen::VectorXd positional_encoding(int position, int dim) {
  Eigen::VectorXd p(dim);
  for (int k = 0; k < dim; ++k) {
    const int j2 = k - (k % 2);
    const double angle = position / std::pow(10000.0, static_cast<double>(j2) / dim);
    p[k] = (k % 2 == 0) ? std::sin(angle) : std::cos(angle);
  }
  return p;
}

// ---------------------------------------------------------------------------

/// lambda * sum of squared penalized weights; optionally adds its gradient.
template <typename T>
double l2_penalty(const ParamList<T>& params, double lambda, bool accumulate_grad) {
  if (lambda < 0) throw DomainError("loss: lambda must be >= 0");
  double penalty = 0.0;
  for (auto* p : params) {
    if (!p->penalized) continue;
    penalty += lambda * static_cast<double>(p->value.cwiseAbs2().sum());
    if (accumulate_grad) p->grad += p->value * T(2 * lambda);
  }
  return penalty;
}

/// Mean over all entries of (truth - pred)^2 plus lambda * sum of squared
/// penalized weights. Writes dL/dpred into `dpred` and adds the penalty
/// gradient into each penalized parameter.
template <typename T>
double mse_l2_loss(const Mat<T>& pred, const Mat<T>& truth, const ParamList<T>& params, double lambda,
                   Mat<T>* dpred = nullptr, bool accumulate_penalty_grad = false) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw DimensionError("loss: shape mismatch");
  if (lambda < 0) throw DomainError("loss: lambda must be >= 0");
  if (pred.size() == 0) throw DimensionError("loss: empty batch");
  const Mat<T> diff = pred - truth;
  const double mse = static_cast<double>(diff.cwiseAbs2().sum()) / static_cast<double>(pred.size());
  if (dpred) *dpred = diff * (T(2) / T(pred.size()));
  return mse + l2_penalty(params, lambda, accumulate_penalty_grad);
}

/// Adam with bias correction.
template <typename T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const ParamList<T>& params) {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      }
    }
    if (m_.size() != params.size()) throw StateError("adam: parameter list changed between steps");
    for (auto* p : params) {
      if (p->trainable && !p->grad.allFinite()) throw NumericalError("adam: non-finite gradient in " + p->name);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      if (!p->trainable) continue;
      m_[i] = T(b1_) * m_[i] + T(1 - b1_) * p->grad;
      v_[i] = T(b2_) * v_[i] + T(1 - b2_) * p->grad.cwiseAbs2();
      p->value.array() -= T(lr_) * (m_[i].array() / T(c1)) / ((v_[i].array() / T(c2)).sqrt() + T(eps_));
    }
  }

  int steps() const { return t_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Mat<T>> m_, v_;
};

}  // namespace hurricast::nn
