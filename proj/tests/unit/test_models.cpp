#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "hurricast/errors.hpp"
#include "hurricast/nn/checkpoint.hpp"
#include "hurricast/nn/models.hpp"
#include "hurricast/nn/train.hpp"

using namespace hurricast;
using namespace hurricast::nn;

namespace {

NetConfig tiny(DecoderKind kind) {
  NetConfig c;
  c.decoder = kind;
  c.outputs = 2;
  c.stat_dim = 2;
  c.steps = 2;
  c.encoder.in_channels = 2;
  c.encoder.widths = {2, 2, 2};
  c.encoder.embedding = 3;
  c.gru_hidden = 3;
  c.gru_layers = 2;
  c.head1 = 4;
  c.head2 = 3;
  c.model_dim = 4;
  c.heads = 2;
  c.ff_dim = 3;
  c.tf_layers = 2;
  c.seed = 11;
  return c;
}

template <typename T>
Batch<T> random_batch(const NetConfig& c, int b, std::mt19937_64& rng) {
  Batch<T> batch;
  batch.size = b;
  batch.images.batch = b * c.steps;
  batch.images.height = c.encoder.size;
  batch.images.width = c.encoder.size;
  batch.images.data = gradcheck::random(c.encoder.in_channels, b * c.steps * c.encoder.size * c.encoder.size, rng)
                          .template cast<T>();
  batch.stat = gradcheck::random(c.stat_dim, c.steps * b, rng).template cast<T>();
  batch.target = gradcheck::random(c.outputs, b, rng).template cast<T>();
  return batch;
}

double whole_net_gradient_error(DecoderKind kind) {
  std::mt19937_64 rng(5);
  const NetConfig c = tiny(kind);
  HurricastNet<double> net(c);
  const auto batch = random_batch<double>(c, 3, rng);
  const Eigen::MatrixXd r = gradcheck::random(c.outputs, 3, rng);
  net.zero_grad();
  net.forward(batch);
  net.backward(r);
  auto loss = [&] { return (net.forward(batch).pred.array() * r.array()).sum(); };
  double worst = 0.0;
  for (auto* p : net.params()) {
    if (!p->trainable) continue;
    const Eigen::MatrixXd analytic = p->grad;
    worst = std::max(worst, gradcheck::relative_error(analytic, gradcheck::numeric_gradient(p->value, loss)));
  }
  return worst;
}

}  // namespace

TEST_CASE("encoder spatial sizes for 25x25 maps") {
  CHECK(CnnEncoder<float>::spatial_trace(25) == std::vector<int>{25, 23, 11, 9, 4, 2, 1});
}

TEST_CASE("default GRU decoder concatenates 1024 hidden values and exposes 128 features") {
  NetConfig c;
  HurricastNet<float> net(c);
  CHECK(net.concat_hidden_size() == 1024);
  CHECK(c.embedding_size() == 128);
}

TEST_CASE("default transformer decoder pools to 142 features") {
  NetConfig c;
  c.decoder = DecoderKind::Transformer;
  c.seed = 3;
  HurricastNet<float> net(c);
  std::mt19937_64 rng(4);
  auto batch = random_batch<float>(c, 2, rng);
  const auto out = net.infer(batch);
  CHECK(out.embedding.rows() == 142);
  CHECK(out.embedding.cols() == 2);
  CHECK(out.pred.rows() == 1);
  std::vector<std::vector<Eigen::MatrixXf>> weights;
  net.infer_with_attention(batch, weights);
  REQUIRE(weights.size() == 2);
  CHECK(weights[0].size() == 4);
  CHECK(weights[0][0].rows() == 8);
}

TEST_CASE("end-to-end gradients of the GRU network") { CHECK(whole_net_gradient_error(DecoderKind::Gru) < 1e-4); }

TEST_CASE("end-to-end gradients of the transformer network") {
  CHECK(whole_net_gradient_error(DecoderKind::Transformer) < 1e-4);
}

TEST_CASE("input shape mismatches are rejected") {
  std::mt19937_64 rng(1);
  const NetConfig c = tiny(DecoderKind::Gru);
  HurricastNet<float> net(c);
  auto batch = random_batch<float>(c, 2, rng);
  batch.stat = Eigen::MatrixXf::Zero(c.stat_dim + 1, c.steps * 2);
  CHECK_THROWS_AS(net.infer(batch), DimensionError);
  auto small = random_batch<float>(c, 2, rng);
  small.images.height = small.images.width = 24;
  small.images.data.resize(c.encoder.in_channels, 2 * c.steps * 24 * 24);
  CHECK_THROWS_AS(net.infer(small), DimensionError);
}

TEST_CASE("freeze rounds to float32 and blocks training") {
  std::mt19937_64 rng(2);
  const NetConfig c = tiny(DecoderKind::Transformer);
  HurricastNet<double> net(c);
  const auto batch = random_batch<double>(c, 2, rng);
  CHECK_THROWS_AS(net.extract_embeddings(batch), StateError);
  net.freeze();
  CHECK(net.frozen());
  for (const auto* p : std::as_const(net).params()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double v = p->value.data()[i];
      CHECK(v == static_cast<double>(static_cast<float>(v)));
    }
  }
  CHECK_THROWS_AS(net.forward(batch), StateError);
  const auto a = net.extract_embeddings(batch);
  const auto b = net.extract_embeddings(batch);
  CHECK(a == b);
}

TEST_CASE("net config map round trip") {
  NetConfig c = tiny(DecoderKind::Transformer);
  c.positional_encoding = false;
  const auto back = NetConfig::from_map(c.to_map());
  CHECK(back.to_map() == c.to_map());
  auto broken = c.to_map();
  broken.erase(broken.begin());
  CHECK_THROWS_AS(NetConfig::from_map(broken), ConfigError);
}

TEST_CASE("checkpoint round trip restores identical predictions") {
  std::mt19937_64 rng(3);
  NetConfig c = tiny(DecoderKind::Gru);
  HurricastNet<float> a(c);
  a.freeze();
  const auto bytes = encode_checkpoint(to_blocks(std::as_const(a).params()));
  c.seed = 99;
  HurricastNet<float> b(c);
  const auto blocks = decode_checkpoint(bytes);
  load_blocks(b.params(), std::span<const CheckpointBlock>(blocks));
  b.freeze();
  const auto batch = random_batch<float>(c, 3, rng);
  CHECK(a.infer(batch).pred == b.infer(batch).pred);
}

TEST_CASE("checkpoint decoding errors") {
  HurricastNet<float> net(tiny(DecoderKind::Gru));
  auto bytes = encode_checkpoint(to_blocks(std::as_const(net).params()));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(bad_version), VersionError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CorruptionError);

  auto blocks = decode_checkpoint(bytes);
  blocks.pop_back();
  CHECK_THROWS_AS(load_blocks(net.params(), std::span<const CheckpointBlock>(blocks)), CorruptionError);

  blocks = decode_checkpoint(bytes);
  blocks.front().values.push_back(0.0f);
  CHECK_THROWS_AS(load_blocks(net.params(), std::span<const CheckpointBlock>(blocks)), CorruptionError);
}

TEST_CASE("training on a learnable toy task halves the validation loss") {
  NetConfig c;
  c.outputs = 1;
  c.stat_dim = 3;
  c.steps = 4;
  c.encoder.in_channels = 2;
  c.encoder.widths = {4, 4, 4};
  c.encoder.embedding = 8;
  c.gru_hidden = 8;
  c.head1 = 16;
  c.head2 = 8;
  c.seed = 21;

  auto make = [&](std::size_t n, std::uint64_t seed) {
    SequenceDataset d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    d.targets.resize(1, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::MatrixXf s(c.steps, c.stat_dim);
      for (Eigen::Index k = 0; k < s.size(); ++k) s.data()[k] = g(rng);
      d.stat.push_back(s);
      d.targets(0, static_cast<Eigen::Index>(i)) = 10.0f + 4.0f * s(c.steps - 1, 0) - 2.0f * s(c.steps - 2, 1);
    }
    d.window = [seed, c](std::size_t i) {
      std::mt19937_64 r(seed * 7919 + i);
      return Tensor4f::Random({c.steps, c.encoder.in_channels, 25, 25}, r);
    };
    return d;
  };
  const auto train = make(256, 1);
  const auto val = make(64, 2);

  HurricastNet<float> net(c);
  const Eigen::VectorXf mean = train.targets.rowwise().mean();
  const float sd = std::sqrt((train.targets.array() - mean[0]).square().mean());
  net.set_target_scaling(mean, Eigen::VectorXf::Constant(1, sd));
  const double before = evaluate_loss(net, val);

  TrainConfig tc;
  tc.learning_rate = 3e-3;
  tc.batch_size = 32;
  tc.l2 = 1e-5;
  tc.max_epochs = 25;
  tc.patience = 25;
  tc.seed = 5;
  const auto result = train_encoder_decoder(net, train, val, tc);
  CHECK_FALSE(result.diverged);
  CHECK(net.frozen());
  CHECK(result.best_val_loss <= 0.5 * before);
  CHECK(evaluate_loss(net, val) == doctest::Approx(result.best_val_loss).epsilon(1e-4));
  CHECK_THROWS_AS(train_encoder_decoder(net, train, val, tc), StateError);

  const auto emb = extract_embeddings(net, val);
  CHECK(emb.rows() == 8);
  CHECK(emb.cols() == 64);
  CHECK((emb.array() >= 0.0f).all());  // post-ReLU features
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  CHECK(TrainConfig::for_target(TargetKind::Intensity).learning_rate == doctest::Approx(1e-3));
  CHECK(TrainConfig::for_target(TargetKind::Track).learning_rate == doctest::Approx(4e-4));
}
