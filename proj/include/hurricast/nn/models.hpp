#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hurricast/nn/layers.hpp"

namespace hurricast::nn {

enum class DecoderKind { Gru, Transformer };
std::string_view label(DecoderKind k);
DecoderKind parse_decoder(std::string_view s);

struct CnnEncoderConfig {
  int in_channels = 9;
  int size = 25;  // square input maps
  std::array<int, 3> widths = {32, 64, 128};
  int embedding = 128;
};

/// Three conv(3x3) -> batch-norm -> ReLU -> maxpool(2) stages, then two dense
/// layers ending at the embedding size.
template <typename T>
class CnnEncoder {
 public:
  CnnEncoder() = default;
  CnnEncoder(const CnnEncoderConfig& config, Rng& rng);

  /// Spatial sizes after each conv and pool, starting with the input size.
  /// For 25 this is 25, 23, 11, 9, 4, 2, 1.
  static std::vector<int> spatial_trace(int size);

  Mat<T> forward(const Image<T>& x);  // training mode
  Mat<T> infer(const Image<T>& x) const;
  Image<T> backward(const Mat<T>& d_embedding, bool need_input_grad = false);

  void params(ParamList<T>& out);
  const CnnEncoderConfig& config() const { return config_; }

 private:
  void check(const Image<T>& x) const;

  CnnEncoderConfig config_;
  int final_size_ = 1;
  std::array<Conv2d<T>, 3> conv_;
  std::array<BatchNorm<T>, 3> bn_;
  std::array<Relu<T>, 3> relu_;
  std::array<MaxPool2d<T>, 3> pool_{MaxPool2d<T>(2), MaxPool2d<T>(2), MaxPool2d<T>(2)};
  Dense<T> fc1_, fc2_;
  Relu<T> fc_relu_;
};

struct NetConfig {
  DecoderKind decoder = DecoderKind::Gru;
  int outputs = 1;  // 1 intensity, 2 track
  int stat_dim = 27;
  int steps = 8;
  CnnEncoderConfig encoder;
  // GRU decoder
  int gru_hidden = 128;
  int gru_layers = 2;
  int head1 = 512;
  int head2 = 128;
  // Transformer decoder
  int model_dim = 142;
  int heads = 2;
  int ff_dim = 128;
  int tf_layers = 2;
  bool positional_encoding = true;
  std::uint64_t seed = 0;

  int embedding_size() const { return decoder == DecoderKind::Gru ? head2 : model_dim; }
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static NetConfig from_map(const std::map<std::string, std::string>& m);
};

/// One mini-batch. Images are time-major (image t * B + b); `stat` is
/// stat_dim x (steps * B), time-major; `target` is outputs x B.
template <typename T>
struct Batch {
  Image<T> images;
  Mat<T> stat;
  Mat<T> target;
  int size = 0;
};

template <typename T>
struct NetOutput {
  Mat<T> pred;       // outputs x B, standardized target space
  Mat<T> embedding;  // embedding_size x B
};

/// CNN encoder feeding a GRU or Transformer decoder.
///
/// GRU path: 2 stacked GRU layers over [embedding; stat] per step, the 8
/// top-layer states concatenated, then dense (8H -> 512) ReLU (512 -> 128)
/// ReLU (128 -> c). The extractable embedding is the post-ReLU 128-vector.
///
/// Transformer path: dense projection (E + S -> d), sinusoidal positions,
/// post-norm encoder blocks, mean pooling over steps (the extractable
/// embedding), dense (d -> c).
template <typename T>
class HurricastNet {
 public:
  explicit HurricastNet(const NetConfig& config);

  NetOutput<T> forward(const Batch<T>& batch);  // training mode, caches activations
  void backward(const Mat<T>& d_pred);
  NetOutput<T> infer(const Batch<T>& batch) const;

  /// Predictions in target units (undoes target standardization).
  Mat<T> predict(const Batch<T>& batch) const;
  /// Requires a frozen model; throws StateError otherwise.
  Mat<T> extract_embeddings(const Batch<T>& batch) const;

  ParamList<T> params();
  std::vector<const Param<T>*> params() const;
  void zero_grad();

  void set_target_scaling(const Vec<T>& mean, const Vec<T>& stddev);
  Mat<T> standardize_targets(const Mat<T>& raw) const;
  Mat<T> unstandardize(const Mat<T>& pred) const;

  /// Rounds every parameter to float32 and blocks further training.
  void freeze();
  bool frozen() const { return frozen_; }
  void unfreeze() { frozen_ = false; }

  const NetConfig& config() const { return config_; }
  /// Length of the concatenated GRU hidden states (steps * hidden).
  int concat_hidden_size() const { return config_.steps * config_.gru_hidden; }
  /// Inference that also returns every block's attention weights, indexed
  /// [block][b * heads + h]. Transformer decoder only.
  NetOutput<T> infer_with_attention(const Batch<T>& batch, std::vector<std::vector<Mat<T>>>& weights) const;

 private:
  Mat<T> sequence_input(const Mat<T>& emb, const Mat<T>& stat) const;
  NetOutput<T> decode_infer(const Mat<T>& seq, std::vector<std::vector<Mat<T>>>* weights) const;
  void check(const Batch<T>& batch) const;

  NetConfig config_;
  bool frozen_ = false;
  CnnEncoder<T> encoder_;
  std::vector<Gru<T>> gru_;
  Dense<T> fc1_, fc2_, fc3_;
  Relu<T> relu1_, relu2_;
  Dense<T> proj_;
  std::vector<EncoderBlock<T>> blocks_;
  Dense<T> head_;
  Mat<T> pe_;  // model_dim x steps
  Param<T> target_mean_, target_std_;
};

/// Concatenates the per-step columns of a time-major matrix into one column
/// per sequence: (rows * steps) x B with step t occupying rows [t*rows, (t+1)*rows).
template <typename T>
Mat<T> concat_steps(const Mat<T>& x, int steps) {
  const Eigen::Index b = x.cols() / steps;
  Mat<T> out(x.rows() * steps, b);
  for (int t = 0; t < steps; ++t) out.middleRows(t * x.rows(), x.rows()) = x.middleCols(t * b, b);
  return out;
}

template <typename T>
Mat<T> split_steps(const Mat<T>& x, int steps) {
  const Eigen::Index rows = x.rows() / steps;
  const Eigen::Index b = x.cols();
  Mat<T> out(rows, b * steps);
  for (int t = 0; t < steps; ++t) out.middleCols(t * b, b) = x.middleRows(t * rows, rows);
  return out;
}

}  // namespace hurricast::nn
