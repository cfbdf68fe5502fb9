#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "hurricast/io.hpp"

namespace hurricast::gbt {

struct GbtConfig {
  int max_depth = 6;
  int n_estimators = 200;
  double learning_rate = 0.1;
  double subsample = 0.8;
  double colsample_bytree = 1.0;
  double min_child_weight = 1.0;
  double reg_lambda = 1.0;  // L2 penalty on leaf weights
  std::uint64_t seed = 0;

  /// Basic sanity (positive depth and rounds, fractions in (0, 1], ...).
  void validate() const;
  /// Tuning box: depth 6-9, 100-300 rounds, lr 0.03-0.15, subsample 0.6-0.9,
  /// colsample 0.7-1.0, min_child_weight 1-5. Throws ConfigError naming the field.
  void check_tuning_ranges() const;
};

struct Node {
  std::int32_t feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;     // go left when x < threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  float value = 0.0f;  // leaf weight
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root

  template <typename Row>
  float leaf_value(const Row& x) const {
    std::int32_t i = 0;
    while (nodes[i].feature >= 0) {
      const Node& n = nodes[i];
      i = static_cast<float>(x[n.feature]) < n.threshold ? n.left : n.right;
    }
    return nodes[i].value;
  }

  int depth() const;
};

class GbtModel {
 public:
  GbtModel() = default;
  GbtModel(double base_score, double learning_rate, Eigen::Index n_features)
      : base_score_(base_score), learning_rate_(learning_rate), n_features_(n_features) {}

  /// base_score + learning_rate * sum of leaf values, accumulated in tree order.
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;

  double base_score() const { return base_score_; }
  double learning_rate() const { return learning_rate_; }
  Eigen::Index feature_count() const { return n_features_; }
  const std::vector<Tree>& trees() const { return trees_; }
  std::vector<Tree>& trees() { return trees_; }
  /// Training MSE after each round (index 0 is the base score alone).
  const std::vector<double>& training_mse() const { return training_mse_; }
  std::vector<double>& training_mse() { return training_mse_; }

  void serialize(io::ByteWriter& w) const;
  static GbtModel deserialize(io::ByteReader& r);

 private:
  double base_score_ = 0.0;
  double learning_rate_ = 0.1;
  Eigen::Index n_features_ = 0;
  std::vector<Tree> trees_;
  std::vector<double> training_mse_;
};

/// Squared-error boosting with exact greedy level-wise splits.
GbtModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GbtConfig& config);

}  // namespace hurricast::gbt
