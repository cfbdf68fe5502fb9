#include "hurricast/nn/models.hpp"

#include <cmath>

#include "hurricast/errors.hpp"

namespace hurricast::nn {

std::string_view label(DecoderKind k) { return k == DecoderKind::Gru ? "gru" : "transformer"; }

DecoderKind parse_decoder(std::string_view s) {
  if (s == "gru") return DecoderKind::Gru;
  if (s == "transformer") return DecoderKind::Transformer;
  throw DomainError("unknown decoder '" + std::string(s) + "' (expected gru or transformer)");
}

// ---------------------------------------------------------------------------

template <typename T>
std::vector<int> CnnEncoder<T>::spatial_trace(int size) {
  std::vector<int> trace{size};
  for (int stage = 0; stage < 3; ++stage) {
    size = Conv2d<T>::output_size(size, 3);
    trace.push_back(size);
    size = MaxPool2d<T>::output_size(size, 2);
    trace.push_back(size);
  }
  return trace;
}

template <typename T>
CnnEncoder<T>::CnnEncoder(const CnnEncoderConfig& config, Rng& rng) : config_(config) {
  const auto trace = spatial_trace(config.size);
  for (int s : trace) {
    if (s < 1) throw DimensionError("cnn encoder: input size " + std::to_string(config.size) + " collapses to zero");
  }
  if (config.size == 25 && trace != std::vector<int>{25, 23, 11, 9, 4, 2, 1}) {
    throw DimensionError("cnn encoder: unexpected spatial trace for 25x25 input");
  }
  final_size_ = trace.back();
  int in = config.in_channels;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "encoder.conv" + std::to_string(i + 1);
    conv_[i] = Conv2d<T>(name, in, config.widths[i], 3, rng);
    bn_[i] = BatchNorm<T>("encoder.bn" + std::to_string(i + 1), config.widths[i]);
    in = config.widths[i];
  }
  const int flat = in * final_size_ * final_size_;
  fc1_ = Dense<T>("encoder.fc1", flat, config.embedding, rng);
  fc2_ = Dense<T>("encoder.fc2", config.embedding, config.embedding, rng);
}

template <typename T>
void CnnEncoder<T>::check(const Image<T>& x) const {
  if (x.channels() != config_.in_channels || x.height != config_.size || x.width != config_.size) {
    throw DimensionError("cnn encoder: expected (" + std::to_string(config_.in_channels) + ", " +
                         std::to_string(config_.size) + ", " + std::to_string(config_.size) + ") maps, got (" +
                         std::to_string(x.channels()) + ", " + std::to_string(x.height) + ", " +
                         std::to_string(x.width) + ")");
  }
}

namespace {

// (C x N*s*s) -> (C*s*s x N), pixel-major within each column.
template <typename T>
Mat<T> flatten(const Image<T>& x) {
  const Eigen::Index ss = static_cast<Eigen::Index>(x.height) * x.width;
  if (ss == 1) return x.data;
  Mat<T> out(x.channels() * ss, x.batch);
  for (int n = 0; n < x.batch; ++n) {
    for (Eigen::Index p = 0; p < ss; ++p) out.block(p * x.channels(), n, x.channels(), 1) = x.data.col(n * ss + p);
  }
  return out;
}

template <typename T>
Image<T> unflatten(const Mat<T>& m, Eigen::Index channels, int size) {
  Image<T> x;
  x.batch = static_cast<int>(m.cols());
  x.height = x.width = size;
  const Eigen::Index ss = static_cast<Eigen::Index>(size) * size;
  if (ss == 1) {
    x.data = m;
    return x;
  }
  x.data.resize(channels, m.cols() * ss);
  for (int n = 0; n < x.batch; ++n) {
    for (Eigen::Index p = 0; p < ss; ++p) x.data.col(n * ss + p) = m.block(p * channels, n, channels, 1);
  }
  return x;
}

}  // namespace

template <typename T>
Mat<T> CnnEncoder<T>::forward(const Image<T>& x) {
  check(x);
  Image<T> h = x;
  for (int i = 0; i < 3; ++i) {
    h = conv_[i].forward(h);
    h.data = relu_[i].forward(bn_[i].forward(h.data, true));
    h = pool_[i].forward(h);
  }
  return fc2_.forward(fc_relu_.forward(fc1_.forward(flatten(h))));
}

template <typename T>
Mat<T> CnnEncoder<T>::infer(const Image<T>& x) const {
  check(x);
  Image<T> h = x;
  for (int i = 0; i < 3; ++i) {
    h = conv_[i].infer(h);
    h.data = Relu<T>::infer(bn_[i].infer(h.data));
    h = pool_[i].infer(h);
  }
  return fc2_.infer(Relu<T>::infer(fc1_.infer(flatten(h))));
}

template <typename T>
Image<T> CnnEncoder<T>::backward(const Mat<T>& d_embedding, bool need_input_grad) {
  Mat<T> d = fc1_.backward(fc_relu_.backward(fc2_.backward(d_embedding)));
  Image<T> g = unflatten(d, config_.widths[2], final_size_);
  for (int i = 2; i >= 0; --i) {
    g = pool_[i].backward(g);
    g.data = bn_[i].backward(relu_[i].backward(g.data));
    g = conv_[i].backward(g, need_input_grad || i > 0);
  }
  return g;
}

template <typename T>
void CnnEncoder<T>::params(ParamList<T>& out) {
  for (int i = 0; i < 3; ++i) {
    conv_[i].params(out);
    bn_[i].params(out);
  }
  fc1_.params(out);
  fc2_.params(out);
}

// ---------------------------------------------------------------------------

void NetConfig::validate() const {
  if (outputs < 1) throw ConfigError("net: outputs must be >= 1");
  if (stat_dim < 0) throw ConfigError("net: stat_dim must be >= 0");
  if (steps < 1) throw ConfigError("net: steps must be >= 1");
  if (encoder.embedding < 1) throw ConfigError("net: embedding must be >= 1");
  for (int w : encoder.widths) {
    if (w < 1) throw ConfigError("net: conv widths must be >= 1");
  }
  if (decoder == DecoderKind::Gru) {
    if (gru_hidden < 1 || gru_layers < 1 || head1 < 1 || head2 < 1) throw ConfigError("net: bad GRU decoder sizes");
  } else {
    if (model_dim < 1 || heads < 1 || model_dim % heads != 0) {
      throw ConfigError("net: model_dim must be a positive multiple of heads");
    }
    if (ff_dim < 1 || tf_layers < 1) throw ConfigError("net: bad transformer sizes");
  }
}

std::map<std::string, std::string> NetConfig::to_map() const {
  auto s = [](auto v) { return std::to_string(v); };
  return {
      {"decoder", std::string(label(decoder))},
      {"outputs", s(outputs)},
      {"stat_dim", s(stat_dim)},
      {"steps", s(steps)},
      {"in_channels", s(encoder.in_channels)},
      {"size", s(encoder.size)},
      {"width1", s(encoder.widths[0])},
      {"width2", s(encoder.widths[1])},
      {"width3", s(encoder.widths[2])},
      {"embedding", s(encoder.embedding)},
      {"gru_hidden", s(gru_hidden)},
      {"gru_layers", s(gru_layers)},
      {"head1", s(head1)},
      {"head2", s(head2)},
      {"model_dim", s(model_dim)},
      {"heads", s(heads)},
      {"ff_dim", s(ff_dim)},
      {"tf_layers", s(tf_layers)},
      {"positional_encoding", positional_encoding ? "1" : "0"},
      {"seed", s(seed)},
  };
}

NetConfig NetConfig::from_map(const std::map<std::string, std::string>& m) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = m.find(key);
    if (it == m.end()) throw ConfigError(std::string("net config lacks '") + key + "'");
    return it->second;
  };
  auto i = [&](const char* key) {
    try {
      return std::stoi(get(key));
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("net config: bad integer for '") + key + "'");
    }
  };
  NetConfig c;
  c.decoder = parse_decoder(get("decoder"));
  c.outputs = i("outputs");
  c.stat_dim = i("stat_dim");
  c.steps = i("steps");
  c.encoder.in_channels = i("in_channels");
  c.encoder.size = i("size");
  c.encoder.widths = {i("width1"), i("width2"), i("width3")};
  c.encoder.embedding = i("embedding");
  c.gru_hidden = i("gru_hidden");
  c.gru_layers = i("gru_layers");
  c.head1 = i("head1");
  c.head2 = i("head2");
  c.model_dim = i("model_dim");
  c.heads = i("heads");
  c.ff_dim = i("ff_dim");
  c.tf_layers = i("tf_layers");
  c.positional_encoding = get("positional_encoding") == "1";
  c.seed = std::stoull(get("seed"));
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

template <typename T>
HurricastNet<T>::HurricastNet(const NetConfig& config) : config_(config) {
  config.validate();
  Rng rng(config.seed);
  encoder_ = CnnEncoder<T>(config.encoder, rng);
  const int in = config.encoder.embedding + config.stat_dim;
  if (config.decoder == DecoderKind::Gru) {
    for (int l = 0; l < config.gru_layers; ++l) {
      gru_.emplace_back("gru" + std::to_string(l + 1), l == 0 ? in : config.gru_hidden, config.gru_hidden, rng);
    }
    fc1_ = Dense<T>("head.fc1", concat_hidden_size(), config.head1, rng);
    fc2_ = Dense<T>("head.fc2", config.head1, config.head2, rng);
    fc3_ = Dense<T>("head.fc3", config.head2, config.outputs, rng);
  } else {
    proj_ = Dense<T>("proj", in, config.model_dim, rng);
    for (int l = 0; l < config.tf_layers; ++l) {
      blocks_.emplace_back("block" + std::to_string(l + 1), config.model_dim, config.heads, config.ff_dim, rng);
    }
    head_ = Dense<T>("head", config.model_dim, config.outputs, rng);
    pe_ = Mat<T>::Zero(config.model_dim, config.steps);
    if (config.positional_encoding) {
      for (int t = 0; t < config.steps; ++t) pe_.col(t) = positional_encoding(t, config.model_dim).cast<T>();
    }
  }
  target_mean_.name = "target.mean";
  target_mean_.resize(config.outputs, 1);
  target_mean_.trainable = false;
  target_std_.name = "target.std";
  target_std_.resize(config.outputs, 1);
  target_std_.value.setOnes();
  target_std_.trainable = false;
}

template <typename T>
void HurricastNet<T>::check(const Batch<T>& batch) const {
  if (batch.size < 1) throw DimensionError("net: empty batch");
  if (batch.images.batch != batch.size * config_.steps) {
    throw DimensionError("net: expected " + std::to_string(batch.size * config_.steps) + " images, got " +
                         std::to_string(batch.images.batch));
  }
  if (batch.stat.rows() != config_.stat_dim || batch.stat.cols() != batch.size * config_.steps) {
    throw DimensionError("net: statistical input must be " + std::to_string(config_.stat_dim) + " x " +
                         std::to_string(batch.size * config_.steps));
  }
}

template <typename T>
Mat<T> HurricastNet<T>::sequence_input(const Mat<T>& emb, const Mat<T>& stat) const {
  Mat<T> seq(emb.rows() + stat.rows(), emb.cols());
  seq << emb, stat;
  return seq;
}

template <typename T>
NetOutput<T> HurricastNet<T>::forward(const Batch<T>& batch) {
  if (frozen_) throw StateError("net: frozen model cannot run a training pass");
  check(batch);
  const Mat<T> seq = sequence_input(encoder_.forward(batch.images), batch.stat);
  NetOutput<T> out;
  if (config_.decoder == DecoderKind::Gru) {
    Mat<T> h = seq;
    for (auto& g : gru_) h = g.forward(h, config_.steps);
    Mat<T> a1 = relu1_.forward(fc1_.forward(concat_steps(h, config_.steps)));
    out.embedding = relu2_.forward(fc2_.forward(a1));
    out.pred = fc3_.forward(out.embedding);
  } else {
    Mat<T> x = proj_.forward(seq);
    const Eigen::Index b = batch.size;
    for (int t = 0; t < config_.steps; ++t) x.middleCols(t * b, b).colwise() += pe_.col(t);
    for (auto& blk : blocks_) x = blk.forward(x, config_.steps);
    out.embedding = mean_pool(x, config_.steps);
    out.pred = head_.forward(out.embedding);
  }
  return out;
}

template <typename T>
void HurricastNet<T>::backward(const Mat<T>& d_pred) {
  Mat<T> dseq;
  if (config_.decoder == DecoderKind::Gru) {
    Mat<T> d = fc1_.backward(relu1_.backward(fc2_.backward(relu2_.backward(fc3_.backward(d_pred)))));
    Mat<T> dh = split_steps(d, config_.steps);
    for (auto it = gru_.rbegin(); it != gru_.rend(); ++it) dh = it->backward(dh);
    dseq = std::move(dh);
  } else {
    Mat<T> dx = mean_pool_backward(head_.backward(d_pred), config_.steps);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dx = it->backward(dx);
    dseq = proj_.backward(dx);
  }
  encoder_.backward(dseq.topRows(config_.encoder.embedding), false);
}

template <typename T>
NetOutput<T> HurricastNet<T>::decode_infer(const Mat<T>& seq,
                                           std::vector<std::vector<Mat<T>>>* weights) const {
  NetOutput<T> out;
  if (config_.decoder == DecoderKind::Gru) {
    Mat<T> h = seq;
    for (const auto& g : gru_) h = g.infer(h, config_.steps);
    Mat<T> a1 = Relu<T>::infer(fc1_.infer(concat_steps(h, config_.steps)));
    out.embedding = Relu<T>::infer(fc2_.infer(a1));
    out.pred = fc3_.infer(out.embedding);
    return out;
  }
  Mat<T> x = proj_.infer(seq);
  const Eigen::Index b = seq.cols() / config_.steps;
  for (int t = 0; t < config_.steps; ++t) x.middleCols(t * b, b).colwise() += pe_.col(t);
  if (weights) weights->assign(blocks_.size(), {});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = blocks_[i].infer(x, config_.steps, weights ? &(*weights)[i] : nullptr);
  }
  out.embedding = mean_pool(x, config_.steps);
  out.pred = head_.infer(out.embedding);
  return out;
}

template <typename T>
NetOutput<T> HurricastNet<T>::infer(const Batch<T>& batch) const {
  check(batch);
  return decode_infer(sequence_input(encoder_.infer(batch.images), batch.stat), nullptr);
}

template <typename T>
NetOutput<T> HurricastNet<T>::infer_with_attention(const Batch<T>& batch,
                                                   std::vector<std::vector<Mat<T>>>& weights) const {
  if (config_.decoder != DecoderKind::Transformer) throw ConfigError("net: attention weights need a transformer");
  check(batch);
  return decode_infer(sequence_input(encoder_.infer(batch.images), batch.stat), &weights);
}

template <typename T>
Mat<T> HurricastNet<T>::predict(const Batch<T>& batch) const {
  return unstandardize(infer(batch).pred);
}

template <typename T>
Mat<T> HurricastNet<T>::extract_embeddings(const Batch<T>& batch) const {
  if (!frozen_) throw StateError("net: embeddings can only be extracted from a frozen model");
  return infer(batch).embedding;
}

template <typename T>
ParamList<T> HurricastNet<T>::params() {
  ParamList<T> out;
  encoder_.params(out);
  for (auto& g : gru_) g.params(out);
  if (config_.decoder == DecoderKind::Gru) {
    fc1_.params(out);
    fc2_.params(out);
    fc3_.params(out);
  } else {
    proj_.params(out);
    for (auto& blk : blocks_) blk.params(out);
    head_.params(out);
  }
  out.push_back(&target_mean_);
  out.push_back(&target_std_);
  return out;
}

template <typename T>
std::vector<const Param<T>*> HurricastNet<T>::params() const {
  auto list = const_cast<HurricastNet<T>*>(this)->params();
  return {list.begin(), list.end()};
}

template <typename T>
void HurricastNet<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
void HurricastNet<T>::set_target_scaling(const Vec<T>& mean, const Vec<T>& stddev) {
  if (mean.size() != config_.outputs || stddev.size() != config_.outputs) {
    throw DimensionError("net: target scaling size mismatch");
  }
  if ((stddev.array() <= T(0)).any()) throw DomainError("net: target std must be positive");
  target_mean_.value.col(0) = mean;
  target_std_.value.col(0) = stddev;
}

template <typename T>
Mat<T> HurricastNet<T>::standardize_targets(const Mat<T>& raw) const {
  Mat<T> z = raw.colwise() - target_mean_.value.col(0);
  return target_std_.value.col(0).cwiseInverse().asDiagonal() * z;
}

template <typename T>
Mat<T> HurricastNet<T>::unstandardize(const Mat<T>& pred) const {
  Mat<T> y = target_std_.value.col(0).asDiagonal() * pred;
  y.colwise() += target_mean_.value.col(0);
  return y;
}

template <typename T>
void HurricastNet<T>::freeze() {
  for (auto* p : params()) {
    p->value = p->value.template cast<float>().template cast<T>();
    p->grad.resize(0, 0);
  }
  frozen_ = true;
}

template class CnnEncoder<float>;
template class CnnEncoder<double>;
template class HurricastNet<float>;
template class HurricastNet<double>;

}  // namespace hurricast::nn
