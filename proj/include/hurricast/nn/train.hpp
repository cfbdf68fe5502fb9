#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hurricast/nn/models.hpp"
#include "hurricast/tensor.hpp"

namespace hurricast::nn {

enum class TargetKind { Intensity, Track };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  double l2 = 0.01;
  int max_epochs = 30;
  int patience = 10;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;

  /// lr 1e-3 for intensity, 4e-4 for track.
  static TrainConfig for_target(TargetKind kind);
  void validate() const;
};

/// Cases for the encoder-decoder. Windows are produced on demand so the
/// cube payload is not duplicated per case.
struct SequenceDataset {
  std::function<Tensor4f(std::size_t)> window;  // (steps, C, H, W), standardized
  std::vector<Eigen::MatrixXf> stat;             // steps x S per case, standardized
  Eigen::MatrixXf targets;                       // outputs x N, raw units

  std::size_t size() const { return stat.size(); }
};

template <typename T>
Batch<T> make_batch(const SequenceDataset& data, std::span<const std::size_t> indices, int steps);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean batch MSE on standardized targets
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

/// Minibatch Adam on MSE + L2. Targets are standardized with training-set
/// statistics. Keeps the parameters of the best validation epoch, stops
/// after `patience` epochs without improvement, and freezes the model.
template <typename T>
TrainResult train_encoder_decoder(HurricastNet<T>& net, const SequenceDataset& train, const SequenceDataset& val,
                                  const TrainConfig& config, std::ostream* log = nullptr);

/// Mean MSE on standardized targets in inference mode.
template <typename T>
double evaluate_loss(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size = 64);

/// embedding_size x N. The model must be frozen.
template <typename T>
Mat<T> extract_embeddings(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size = 64);

/// outputs x N in target units.
template <typename T>
Mat<T> predict(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size = 64);

}  // namespace hurricast::nn
