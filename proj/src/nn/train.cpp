#include "hurricast/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "hurricast/errors.hpp"

namespace hurricast::nn {

TrainConfig TrainConfig::for_target(TargetKind kind) {
  TrainConfig c;
  c.learning_rate = kind == TargetKind::Intensity ? 1e-3 : 4e-4;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(l2 >= 0.0)) throw ConfigError("train: l2 must be >= 0");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

template <typename T>
Batch<T> make_batch(const SequenceDataset& data, std::span<const std::size_t> indices, int steps) {
  Batch<T> batch;
  const auto b = static_cast<Eigen::Index>(indices.size());
  batch.size = static_cast<int>(b);
  if (b == 0) return batch;
  const Eigen::Index s = data.stat.front().cols();
  batch.stat.resize(s, steps * b);
  batch.target.resize(data.targets.rows(), b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto idx = indices[j];
    const auto& st = data.stat.at(idx);
    if (st.rows() != steps || st.cols() != s) throw DimensionError("dataset: inconsistent statistical window shape");
    for (int t = 0; t < steps; ++t) batch.stat.col(t * b + j) = st.row(t).transpose().cast<T>();
    batch.target.col(j) = data.targets.col(static_cast<Eigen::Index>(idx)).cast<T>();

    const Tensor4f w = data.window(idx);
    if (w.dim(0) != steps) throw DimensionError("dataset: window has " + std::to_string(w.dim(0)) + " steps");
    const Eigen::Index c = w.dim(1), h = w.dim(2), wd = w.dim(3);
    if (j == 0) {
      batch.images.batch = static_cast<int>(steps * b);
      batch.images.height = static_cast<int>(h);
      batch.images.width = static_cast<int>(wd);
      batch.images.data.resize(c, steps * b * h * wd);
    } else if (c != batch.images.channels() || h != batch.images.height || wd != batch.images.width) {
      throw DimensionError("dataset: windows differ in shape");
    }
    const float* src = w.data().data();
    const Eigen::Index plane = h * wd;
    for (int t = 0; t < steps; ++t) {
      const Eigen::Index image = t * b + j;
      for (Eigen::Index ch = 0; ch < c; ++ch) {
        const float* p = src + (t * c + ch) * plane;
        for (Eigen::Index q = 0; q < plane; ++q) batch.images.data(ch, image * plane + q) = static_cast<T>(p[q]);
      }
    }
  }
  return batch;
}

namespace {

template <typename T>
std::vector<Mat<T>> snapshot(const ParamList<T>& params) {
  std::vector<Mat<T>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

template <typename T>
void restore(const ParamList<T>& params, const std::vector<Mat<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

void check_dataset(const SequenceDataset& d, int outputs, const char* which) {
  if (d.size() == 0) throw DimensionError(std::string("train: empty ") + which + " set");
  if (d.targets.cols() != static_cast<Eigen::Index>(d.size()) || d.targets.rows() != outputs) {
    throw DimensionError(std::string("train: ") + which + " targets must be " + std::to_string(outputs) + " x " +
                         std::to_string(d.size()));
  }
  if (!d.window) throw DimensionError(std::string("train: ") + which + " set has no window source");
}

template <typename T, typename Fn>
void for_each_batch(const SequenceDataset& data, int batch_size, Fn&& fn) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t lo = 0; lo < idx.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(idx.size(), lo + static_cast<std::size_t>(batch_size));
    fn(lo, std::span<const std::size_t>(idx.data() + lo, hi - lo));
  }
}

}  // namespace

template <typename T>
double evaluate_loss(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size) {
  double sse = 0.0;
  double count = 0.0;
  for_each_batch<T>(data, batch_size, [&](std::size_t, std::span<const std::size_t> ids) {
    auto batch = make_batch<T>(data, ids, net.config().steps);
    Mat<T> diff = net.infer(batch).pred - net.standardize_targets(batch.target);
    sse += static_cast<double>(diff.cwiseAbs2().sum());
    count += static_cast<double>(diff.size());
  });
  return sse / count;
}

template <typename T>
TrainResult train_encoder_decoder(HurricastNet<T>& net, const SequenceDataset& train, const SequenceDataset& val,
                                  const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (net.frozen()) throw StateError("train: model is frozen");
  const int outputs = net.config().outputs;
  check_dataset(train, outputs, "training");
  check_dataset(val, outputs, "validation");

  const Eigen::MatrixXd y = train.targets.cast<double>();
  const Eigen::VectorXd mean = y.rowwise().mean();
  Eigen::VectorXd sd = ((y.colwise() - mean).cwiseAbs2().rowwise().mean()).cwiseSqrt();
  for (Eigen::Index i = 0; i < sd.size(); ++i) {
    if (!(sd[i] > 1e-12)) sd[i] = 1.0;
  }
  net.set_target_scaling(mean.cast<T>(), sd.cast<T>());

  ParamList<T> params = net.params();
  Adam<T> adam(config.learning_rate);
  Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Mat<T>> best = snapshot(params);
  int since_best = 0;
  const int steps = net.config().steps;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    try {
      for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(config.batch_size));
        if (hi - lo < 2) continue;  // batch-norm needs more than one sample
        auto batch = make_batch<T>(train, std::span<const std::size_t>(order.data() + lo, hi - lo), steps);
        net.zero_grad();
        auto out = net.forward(batch);
        Mat<T> dpred;
        const double data_loss = mse_l2_loss<T>(out.pred, net.standardize_targets(batch.target), {}, 0.0, &dpred);
        if (!std::isfinite(data_loss)) throw NumericalError("non-finite training loss");
        l2_penalty(params, config.l2, true);
        net.backward(dpred);
        adam.step(params);
        loss_sum += data_loss;
        ++batches;
      }
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ": " + e.what();
      if (log) *log << "training diverged at " << result.diagnostic << "; keeping epoch " << result.best_epoch << "\n";
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = batches ? loss_sum / batches : 0.0;
    rec.val_loss = evaluate_loss(net, val, config.batch_size);
    result.curve.push_back(rec);
    if (log) *log << "epoch " << epoch << " train " << rec.train_loss << " val " << rec.val_loss << "\n";
    if (!std::isfinite(rec.val_loss)) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ": non-finite validation loss";
      break;
    }
    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best = snapshot(params);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  restore(params, best);
  net.freeze();
  return result;
}

template <typename T>
Mat<T> extract_embeddings(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size) {
  if (!net.frozen()) throw StateError("net: embeddings can only be extracted from a frozen model");
  Mat<T> out(net.config().embedding_size(), static_cast<Eigen::Index>(data.size()));
  for_each_batch<T>(data, batch_size, [&](std::size_t lo, std::span<const std::size_t> ids) {
    auto batch = make_batch<T>(data, ids, net.config().steps);
    out.middleCols(static_cast<Eigen::Index>(lo), batch.size) = net.extract_embeddings(batch);
  });
  return out;
}

template <typename T>
Mat<T> predict(const HurricastNet<T>& net, const SequenceDataset& data, int batch_size) {
  Mat<T> out(net.config().outputs, static_cast<Eigen::Index>(data.size()));
  for_each_batch<T>(data, batch_size, [&](std::size_t lo, std::span<const std::size_t> ids) {
    auto batch = make_batch<T>(data, ids, net.config().steps);
    out.middleCols(static_cast<Eigen::Index>(lo), batch.size) = net.predict(batch);
  });
  return out;
}

#define HURRICAST_INSTANTIATE(T)                                                                                 \
  template Batch<T> make_batch<T>(const SequenceDataset&, std::span<const std::size_t>, int);                   \
  template TrainResult train_encoder_decoder<T>(HurricastNet<T>&, const SequenceDataset&, const SequenceDataset&, \
                                                const TrainConfig&, std::ostream*);                             \
  template double evaluate_loss<T>(const HurricastNet<T>&, const SequenceDataset&, int);                         \
  template Mat<T> extract_embeddings<T>(const HurricastNet<T>&, const SequenceDataset&, int);                    \
  template Mat<T> predict<T>(const HurricastNet<T>&, const SequenceDataset&, int);

HURRICAST_INSTANTIATE(float)
HURRICAST_INSTANTIATE(double)

#undef HURRICAST_INSTANTIATE

}  // namespace hurricast::nn
