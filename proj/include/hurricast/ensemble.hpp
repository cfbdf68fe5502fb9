#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <vector>

#include "hurricast/forecast.hpp"
#include "hurricast/io.hpp"

namespace hurricast::ensemble {

struct ElasticNetConfig {
  double alpha = 1.0;     // overall penalty
  double l1_ratio = 0.5;  // 1 = lasso, 0 = ridge
  int max_iterations = 10000;
  double tolerance = 1e-10;  // on the largest coefficient change in a sweep

  void validate() const;
  /// Grid box: alpha in [1e-4, 10], l1_ratio in [0, 1].
  void check_tuning_ranges() const;
};

struct ElasticNetModel {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  bool converged = false;
  int sweeps = 0;
  std::vector<double> objective_trace;  // objective after each sweep

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  void serialize(io::ByteWriter& w) const;
  static ElasticNetModel deserialize(io::ByteReader& r);
};

/// (1/2N)||y - X b - c||^2 + alpha (l1 ||b||_1 + (1 - l1)/2 ||b||^2)
double elasticnet_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& coef,
                            double intercept, double alpha, double l1_ratio);

/// Cyclic coordinate descent on centered data; the intercept is unpenalized.
/// Logs a warning and returns the last iterate when it does not converge.
ElasticNetModel fit_elasticnet(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ElasticNetConfig& config);

struct GridSearchResult {
  ElasticNetConfig best;
  double best_cv_mse = 0.0;
  ElasticNetModel model;  // refit on all rows with `best`
};

/// l1_ratio in {0, .25, .5, .75, 1}, alpha log-spaced over [1e-4, 10] (11
/// points), scored by contiguous k-fold cross-validation MSE.
GridSearchResult grid_search_elasticnet(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds = 5);

/// Arithmetic mean of member forecasts for one case. Winds, displacements and
/// predicted positions are averaged componentwise; longitudes are averaged
/// relative to the first member so the dateline does not split the mean.
ForecastRecord simple_average(std::span<const ForecastRecord> members, std::string model_id = "average");

}  // namespace hurricast::ensemble
