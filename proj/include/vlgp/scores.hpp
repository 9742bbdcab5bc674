#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "sparse.hpp"

namespace vlgp {

inline double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  detail::require(a.size() == b.size() && a.size() > 0, "mse: lengths must match and be nonzero");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

inline double rmse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::sqrt(mse(a, b)); }

/// RMSE(approx, truth) / RMSE(laplace, truth)
inline double rrmse(const Eigen::VectorXd& approx, const Eigen::VectorXd& laplace,
                    const Eigen::VectorXd& truth) {
  detail::require(approx.size() == truth.size() && laplace.size() == truth.size(),
                  "rrmse: lengths must match");
  const double den = rmse(laplace, truth);
  if (!(den > 0.0)) throw NumericalError("rrmse: reference RMSE is zero");
  return rmse(approx, truth) / den;
}

/// -log N(truth; mean, (V V')^{-1})
inline double log_score(const Eigen::VectorXd& mean, const SparseUpperTri& v,
                        const Eigen::VectorXd& truth) {
  detail::require(mean.size() == v.dim() && truth.size() == v.dim(), "log_score: dimension mismatch");
  const Eigen::VectorXd r = v.transpose_times(truth - mean);
  const double n = static_cast<double>(v.dim());
  return 0.5 * (r.squaredNorm() - logdet_from_factor(v) + n * std::log(2.0 * std::numbers::pi));
}

/// Same score for a dense precision matrix.
inline double log_score_dense(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision,
                              const Eigen::VectorXd& truth) {
  detail::require(mean.size() == precision.rows() && truth.size() == mean.size(),
                  "log_score_dense: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("log_score_dense: precision not positive definite", -1);
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::VectorXd r = l.transpose() * (truth - mean);
  const double n = static_cast<double>(mean.size());
  return 0.5 * (r.squaredNorm() - 2.0 * l.diagonal().array().log().sum() +
                n * std::log(2.0 * std::numbers::pi));
}

inline double dls(double approx_score, double laplace_score) {
  detail::require(std::isfinite(approx_score) && std::isfinite(laplace_score),
                  "dls: scores must be finite");
  return approx_score - laplace_score;
}

/// Sample CRPS: mean|X - z| - 1/2 mean|X - X'| over all ordered pairs.
inline double crps_sample(std::vector<double> samples, double z) {
  detail::require(samples.size() >= 2, "crps_sample: need at least two samples");
  const double s = static_cast<double>(samples.size());
  double first = 0.0;
  for (double x : samples) first += std::abs(x - z);
  first /= s;
  // sum_{i,j} |x_i - x_j| = 2 sum_k (2k - S + 1) x_(k) with sorted x
  std::sort(samples.begin(), samples.end());
  double pair = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k)
    pair += (2.0 * static_cast<double>(k) - s + 1.0) * samples[k];
  pair *= 2.0 / (s * s);
  return first - 0.5 * pair;
}

inline double crps_sample(const Eigen::VectorXd& samples, double z) {
  return crps_sample(std::vector<double>(samples.data(), samples.data() + samples.size()), z);
}

struct ScoreReport {
  std::string method;
  Index m = 0;
  Index n = 0;
  double rrmse = std::numeric_limits<double>::quiet_NaN();
  double dls = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double crps = std::numeric_limits<double>::quiet_NaN();
  double seconds = std::numeric_limits<double>::quiet_NaN();

  static constexpr const char* kCsvHeader = "method,m,n,rrmse,dls,mse,crps,seconds";
};

inline void write_score_csv(std::ostream& os, const std::vector<ScoreReport>& rows) {
  const auto num = [&os](double v) {
    if (std::isfinite(v)) os << v; else os << "NA";
  };
  os << ScoreReport::kCsvHeader << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    os << r.method << ',' << r.m << ',' << r.n << ',';
    num(r.rrmse); os << ','; num(r.dls); os << ','; num(r.mse); os << ',';
    num(r.crps); os << ','; num(r.seconds); os << '\n';
  }
}

}  // namespace vlgp
