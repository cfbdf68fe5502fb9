#include "hurricast/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hurricast/errors.hpp"

namespace hurricast::gbt {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("gbt: " + what);
}

void in_range(double v, double lo, double hi, const char* name) {
  if (v < lo || v > hi) {
    throw ConfigError(std::string("gbt: ") + name + "=" + std::to_string(v) + " outside [" + std::to_string(lo) +
                      ", " + std::to_string(hi) + "]");
  }
}

struct NodeStats {
  std::int32_t node = 0;
  double g = 0.0;
  double h = 0.0;
};

struct BestSplit {
  double gain = 0.0;
  std::int32_t feature = -1;
  float threshold = 0.0f;
};

float leaf_weight(double g, double h, double lambda) {
  double denom = h + lambda;
  return denom > 0.0 ? static_cast<float>(-g / denom) : 0.0f;
}

}  // namespace

void GbtConfig::validate() const {
  require(max_depth >= 1, "max_depth must be >= 1");
  require(n_estimators >= 1, "n_estimators must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(subsample > 0.0 && subsample <= 1.0, "subsample must be in (0, 1]");
  require(colsample_bytree > 0.0 && colsample_bytree <= 1.0, "colsample_bytree must be in (0, 1]");
  require(min_child_weight >= 0.0, "min_child_weight must be >= 0");
  require(reg_lambda >= 0.0, "reg_lambda must be >= 0");
}

void GbtConfig::check_tuning_ranges() const {
  validate();
  in_range(max_depth, 6, 9, "max_depth");
  in_range(n_estimators, 100, 300, "n_estimators");
  in_range(learning_rate, 0.03, 0.15, "learning_rate");
  in_range(subsample, 0.6, 0.9, "subsample");
  in_range(colsample_bytree, 0.7, 1.0, "colsample_bytree");
  in_range(min_child_weight, 1.0, 5.0, "min_child_weight");
}

int Tree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    if (n.feature < 0) continue;
    d[n.left] = d[n.right] = d[i] + 1;
    best = std::max(best, d[i] + 1);
  }
  return best;
}

Eigen::VectorXd GbtModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != n_features_) {
    throw DimensionError("gbt: model expects " + std::to_string(n_features_) + " features, got " +
                         std::to_string(x.cols()));
  }
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_row(x.row(i));
  return out;
}

double GbtModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != n_features_) throw DimensionError("gbt: feature count mismatch");
  double p = base_score_;
  for (const auto& t : trees_) p += learning_rate_ * static_cast<double>(t.leaf_value(row));
  return p;
}

void GbtModel::serialize(io::ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(n_features_));
  w.f64(base_score_);
  w.f64(learning_rate_);
  w.u32(static_cast<std::uint32_t>(trees_.size()));
  for (const auto& t : trees_) {
    w.u32(static_cast<std::uint32_t>(t.nodes.size()));
    for (const auto& n : t.nodes) {
      w.i32(n.feature);
      w.f32(n.threshold);
      w.i32(n.left);
      w.i32(n.right);
      w.f32(n.value);
    }
  }
}

GbtModel GbtModel::deserialize(io::ByteReader& r) {
  GbtModel m;
  m.n_features_ = r.u32();
  m.base_score_ = r.f64();
  m.learning_rate_ = r.f64();
  const auto n_trees = r.u32();
  // Each node record is 20 bytes; reject counts the buffer cannot hold.
  if (n_trees > r.remaining() / 4) throw CorruptionError("gbt: implausible tree count");
  m.trees_.resize(n_trees);
  for (auto& t : m.trees_) {
    const auto n_nodes = r.u32();
    if (n_nodes == 0 || n_nodes > r.remaining() / 20) throw CorruptionError("gbt: implausible node count");
    t.nodes.resize(n_nodes);
    for (auto& n : t.nodes) {
      n.feature = r.i32();
      n.threshold = r.f32();
      n.left = r.i32();
      n.right = r.i32();
      n.value = r.f32();
    }
    for (const auto& n : t.nodes) {
      if (n.feature < 0) continue;
      const auto sz = static_cast<std::int32_t>(n_nodes);
      if (n.feature >= m.n_features_ || n.left <= 0 || n.right <= 0 || n.left >= sz || n.right >= sz) {
        throw CorruptionError("gbt: node references out of range");
      }
    }
  }
  return m;
}

GbtModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbtConfig& config) {
  config.validate();
  const Eigen::Index n = x.rows();
  const Eigen::Index f = x.cols();
  if (n == 0) throw DimensionError("gbt: empty training set");
  if (y.size() != n) throw DimensionError("gbt: target length does not match row count");
  if (!x.allFinite() || !y.allFinite()) throw DomainError("gbt: non-finite training data");

  const Eigen::MatrixXf xf = x.cast<float>();
  std::vector<std::vector<std::int32_t>> order(static_cast<std::size_t>(f));
  for (Eigen::Index j = 0; j < f; ++j) {
    auto& o = order[j];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](std::int32_t a, std::int32_t b) { return xf(a, j) < xf(b, j); });
  }

  GbtModel model(y.mean(), config.learning_rate, f);
  Eigen::VectorXd pred = Eigen::VectorXd::Constant(n, model.base_score());
  model.training_mse().push_back((y - pred).squaredNorm() / static_cast<double>(n));

  std::mt19937_64 rng(config.seed);
  const double lambda = config.reg_lambda;
  const double mcw = config.min_child_weight;
  const auto n_rows = std::max<Eigen::Index>(1, std::llround(config.subsample * static_cast<double>(n)));
  const auto n_cols = std::max<Eigen::Index>(1, std::llround(config.colsample_bytree * static_cast<double>(f)));

  std::vector<std::int32_t> all_rows(static_cast<std::size_t>(n));
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<std::int32_t> all_cols(static_cast<std::size_t>(f));
  std::iota(all_cols.begin(), all_cols.end(), 0);

  Eigen::VectorXd g(n);
  std::vector<std::int32_t> slot(static_cast<std::size_t>(n));

  for (int round = 0; round < config.n_estimators; ++round) {
    g = pred - y;
    if (g.cwiseAbs().maxCoeff() == 0.0) break;

    std::vector<std::int32_t> rows = all_rows;
    if (n_rows < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(static_cast<std::size_t>(n_rows));
    }
    std::vector<std::int32_t> cols = all_cols;
    if (n_cols < f) {
      std::shuffle(cols.begin(), cols.end(), rng);
      cols.resize(static_cast<std::size_t>(n_cols));
      std::sort(cols.begin(), cols.end());
    }

    Tree tree;
    tree.nodes.emplace_back();
    std::fill(slot.begin(), slot.end(), -1);
    std::vector<NodeStats> level(1);
    for (auto r : rows) {
      slot[r] = 0;
      level[0].g += g[r];
      level[0].h += 1.0;
    }

    for (int depth = 0; depth < config.max_depth && !level.empty(); ++depth) {
      const std::size_t k = level.size();
      std::vector<BestSplit> best(k);
      std::vector<double> gl(k), hl(k);
      std::vector<float> last(k);
      std::vector<char> seen(k);
      std::vector<double> parent_score(k);
      for (std::size_t s = 0; s < k; ++s) parent_score[s] = level[s].g * level[s].g / (level[s].h + lambda);

      for (auto j : cols) {
        std::fill(gl.begin(), gl.end(), 0.0);
        std::fill(hl.begin(), hl.end(), 0.0);
        std::fill(seen.begin(), seen.end(), 0);
        for (auto r : order[j]) {
          const auto s = slot[r];
          if (s < 0) continue;
          const float v = xf(r, j);
          if (seen[s] && v != last[s]) {
            const double hr = level[s].h - hl[s];
            if (hl[s] >= mcw && hr >= mcw) {
              const double gr = level[s].g - gl[s];
              const double gain = gl[s] * gl[s] / (hl[s] + lambda) + gr * gr / (hr + lambda) - parent_score[s];
              if (gain > best[s].gain) best[s] = {gain, j, v};
            }
          }
          gl[s] += g[r];
          hl[s] += 1.0;
          last[s] = v;
          seen[s] = 1;
        }
      }

      std::vector<NodeStats> next;
      std::vector<std::int32_t> child_slot(k, -1);
      for (std::size_t s = 0; s < k; ++s) {
        Node& node = tree.nodes[level[s].node];
        if (best[s].feature < 0) {
          node.value = leaf_weight(level[s].g, level[s].h, lambda);
          continue;
        }
        node.feature = best[s].feature;
        node.threshold = best[s].threshold;
        node.left = static_cast<std::int32_t>(tree.nodes.size());
        node.right = node.left + 1;
        child_slot[s] = static_cast<std::int32_t>(next.size());
        next.push_back({node.left, 0.0, 0.0});
        next.push_back({node.right, 0.0, 0.0});
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
      }
      for (auto r : rows) {
        const auto s = slot[r];
        if (s < 0) continue;
        if (child_slot[s] < 0) {
          slot[r] = -1;
          continue;
        }
        const Node& node = tree.nodes[level[s].node];
        const auto c = child_slot[s] + (xf(r, node.feature) < node.threshold ? 0 : 1);
        slot[r] = c;
        next[c].g += g[r];
        next[c].h += 1.0;
      }
      level = std::move(next);
    }
    for (const auto& st : level) tree.nodes[st.node].value = leaf_weight(st.g, st.h, lambda);

    for (Eigen::Index i = 0; i < n; ++i) {
      pred[i] += config.learning_rate * static_cast<double>(tree.leaf_value(xf.row(i)));
    }
    model.trees().push_back(std::move(tree));
    model.training_mse().push_back((y - pred).squaredNorm() / static_cast<double>(n));
  }
  return model;
}

}  // namespace hurricast::gbt
