#include "hurricast/ensemble.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "hurricast/errors.hpp"

namespace hurricast::ensemble {

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double wrap180(double d) {
  while (d > 180.0) d -= 360.0;
  while (d <= -180.0) d += 360.0;
  return d;
}

}  // namespace

void ElasticNetConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("elasticnet: alpha must be finite and >= 0");
  if (!(l1_ratio >= 0.0 && l1_ratio <= 1.0)) throw ConfigError("elasticnet: l1_ratio must be in [0, 1]");
  if (max_iterations < 1) throw ConfigError("elasticnet: max_iterations must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("elasticnet: tolerance must be positive");
}

void ElasticNetConfig::check_tuning_ranges() const {
  validate();
  if (alpha < 1e-4 || alpha > 10.0) {
    throw ConfigError("elasticnet: alpha=" + std::to_string(alpha) + " outside [1e-4, 10]");
  }
}

Eigen::VectorXd ElasticNetModel::predict(const Eigen::MatrixXd& x) const {
  if (x.cols() != coef.size()) {
    throw DimensionError("elasticnet: model expects " + std::to_string(coef.size()) + " columns, got " +
                         std::to_string(x.cols()));
  }
  return (x * coef).array() + intercept;
}

void ElasticNetModel::serialize(io::ByteWriter& w) const {
  w.u32(static_cast<std::uint32_t>(coef.size()));
  for (Eigen::Index i = 0; i < coef.size(); ++i) w.f64(coef[i]);
  w.f64(intercept);
}

ElasticNetModel ElasticNetModel::deserialize(io::ByteReader& r) {
  ElasticNetModel m;
  const auto n = r.u32();
  if (n > r.remaining() / 8) throw CorruptionError("elasticnet: implausible coefficient count");
  m.coef.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) m.coef[i] = r.f64();
  m.intercept = r.f64();
  m.converged = true;
  return m;
}

double elasticnet_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& coef,
                            double intercept, double alpha, double l1_ratio) {
  const double n = static_cast<double>(x.rows());
  const Eigen::VectorXd r = y - x * coef - Eigen::VectorXd::Constant(y.size(), intercept);
  return r.squaredNorm() / (2.0 * n) +
         alpha * (l1_ratio * coef.lpNorm<1>() + 0.5 * (1.0 - l1_ratio) * coef.squaredNorm());
}

ElasticNetModel fit_elasticnet(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ElasticNetConfig& config) {
  config.validate();
  if (x.rows() == 0) throw DimensionError("elasticnet: empty design matrix");
  if (y.size() != x.rows()) throw DimensionError("elasticnet: target length does not match row count");
  if (x.rows() < x.cols()) {
    std::cerr << "warning: elasticnet fitted with fewer rows (" << x.rows() << ") than columns (" << x.cols()
              << ")\n";
  }
  const double n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::VectorXd col_sq = xc.colwise().squaredNorm().transpose() / n;

  const double l1 = config.alpha * config.l1_ratio;
  const double l2 = config.alpha * (1.0 - config.l1_ratio);

  ElasticNetModel m;
  m.coef = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd resid = yc;
  auto objective = [&] {
    return resid.squaredNorm() / (2.0 * n) + l1 * m.coef.lpNorm<1>() + 0.5 * l2 * m.coef.squaredNorm();
  };

  for (m.sweeps = 1; m.sweeps <= config.max_iterations; ++m.sweeps) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double old = m.coef[j];
      const double denom = col_sq[j] + l2;
      double updated = 0.0;
      if (denom > 0.0) {
        const double rho = xc.col(j).dot(resid) / n + col_sq[j] * old;
        updated = soft_threshold(rho, l1) / denom;
      }
      if (updated != old) {
        resid -= (updated - old) * xc.col(j);
        m.coef[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    m.objective_trace.push_back(objective());
    if (max_change < config.tolerance) {
      m.converged = true;
      break;
    }
  }
  if (!m.converged) {
    m.sweeps = config.max_iterations;
    std::cerr << "warning: elasticnet did not converge in " << config.max_iterations << " sweeps\n";
  }
  m.intercept = y_mean - x_mean.dot(m.coef);
  return m;
}

GridSearchResult grid_search_elasticnet(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds) {
  const Eigen::Index n = x.rows();
  if (folds < 2) throw ConfigError("elasticnet: grid search needs at least 2 folds");
  if (n < folds) throw DimensionError("elasticnet: fewer rows than folds");
  const double ratios[] = {0.0, 0.25, 0.5, 0.75, 1.0};

  GridSearchResult result;
  result.best_cv_mse = std::numeric_limits<double>::infinity();
  for (double ratio : ratios) {
    for (int a = 0; a <= 10; ++a) {
      ElasticNetConfig cfg;
      cfg.l1_ratio = ratio;
      cfg.alpha = std::pow(10.0, -4.0 + 0.5 * a);
      cfg.max_iterations = 2000;
      cfg.tolerance = 1e-8;
      double sse = 0.0;
      for (int k = 0; k < folds; ++k) {
        const Eigen::Index lo = n * k / folds, hi = n * (k + 1) / folds;
        Eigen::MatrixXd xt(n - (hi - lo), x.cols());
        Eigen::VectorXd yt(n - (hi - lo));
        xt << x.topRows(lo), x.bottomRows(n - hi);
        yt << y.head(lo), y.tail(n - hi);
        std::streambuf* saved = std::cerr.rdbuf(nullptr);
        auto m = fit_elasticnet(xt, yt, cfg);
        std::cerr.rdbuf(saved);
        sse += (m.predict(x.middleRows(lo, hi - lo)) - y.segment(lo, hi - lo)).squaredNorm();
      }
      const double mse = sse / static_cast<double>(n);
      if (mse < result.best_cv_mse) {
        result.best_cv_mse = mse;
        result.best = cfg;
      }
    }
  }
  result.best.max_iterations = 10000;
  result.best.tolerance = 1e-10;
  result.model = fit_elasticnet(x, y, result.best);
  return result;
}

ForecastRecord simple_average(std::span<const ForecastRecord> members, std::string model_id) {
  if (members.empty()) throw DimensionError("simple_average: no member forecasts");
  const auto& ref = members.front();
  ForecastRecord out;
  out.model_id = std::move(model_id);
  out.storm_id = ref.storm_id;
  out.t0 = ref.t0;
  double lon_offset = 0.0;
  for (const auto& m : members) {
    if (m.storm_id != ref.storm_id || m.t0 != ref.t0) {
      throw ConfigError("simple_average: members refer to different cases (" + ref.case_id() + " vs " + m.case_id() +
                        ")");
    }
    out.wind += m.wind;
    out.dlat += m.dlat;
    out.dlon += m.dlon;
    out.lat += m.lat;
    lon_offset += wrap180(m.lon - ref.lon);
  }
  const double k = static_cast<double>(members.size());
  out.wind /= k;
  out.dlat /= k;
  out.dlon /= k;
  out.lat /= k;
  out.lon = wrap180(ref.lon + lon_offset / k);
  return out;
}

}  // namespace hurricast::ensemble
