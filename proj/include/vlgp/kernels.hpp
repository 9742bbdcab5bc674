#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "common.hpp"
#include "geometry.hpp"

namespace vlgp {

/// Isotropic Matérn parameters: variance sigma^2, range lambda (coordinate
/// units) and smoothness nu. All strictly positive.
struct MaternParams {
  double variance = 1.0;
  double range = 1.0;
  double smoothness = 0.5;

  void validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v > 0.0; };
    detail::require(ok(variance), "MaternParams: variance must be positive and finite");
    detail::require(ok(range), "MaternParams: range must be positive and finite");
    detail::require(ok(smoothness), "MaternParams: smoothness must be positive and finite");
  }
};

/// Matérn covariance at distance h,
///   sigma^2 2^{1-nu}/Gamma(nu) x^nu K_nu(x),  x = sqrt(2 nu) h / lambda.
/// Half-integer nu in {1/2, 3/2, 5/2} use closed forms.
inline double matern(double h, const MaternParams& p) {
  if (!(h >= 0.0)) throw InvalidArgument("matern: distance must be non-negative");
  p.validate();
  const double nu = p.smoothness;
  const double x = std::sqrt(2.0 * nu) * h / p.range;
  if (x == 0.0) return p.variance;
  if (nu == 0.5) return p.variance * std::exp(-x);
  if (nu == 1.5) return p.variance * (1.0 + x) * std::exp(-x);
  if (nu == 2.5) return p.variance * (1.0 + x + x * x / 3.0) * std::exp(-x);
  if (x > 700.0) return 0.0;
  const double bessel = std::cyl_bessel_k(nu, x);
  if (!std::isfinite(bessel)) return p.variance;  // x so small the product is sigma^2
  const double logc = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
  return std::min(p.variance, p.variance * std::exp(logc) * bessel);
}

/// Matérn evaluated through the Bessel route even for half-integer nu.
/// Used to cross-check the closed forms.
inline double matern_bessel(double h, const MaternParams& p) {
  const double nu = p.smoothness;
  const double x = std::sqrt(2.0 * nu) * h / p.range;
  if (x == 0.0) return p.variance;
  const double logc = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
  return p.variance * std::exp(logc) * std::cyl_bessel_k(nu, x);
}

/// Symmetric covariance of a point set with itself. The upper triangle is
/// computed and mirrored, so the result is exactly symmetric.
inline Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& coords, const MaternParams& p) {
  const Index n = coords.rows();
  Eigen::MatrixXd k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = p.variance;
    for (Index i = 0; i < j; ++i) {
      k(i, j) = matern((coords.row(i) - coords.row(j)).norm(), p);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

inline Eigen::MatrixXd cov_matrix(const LocationSet& locs, const MaternParams& p) {
  return cov_matrix(locs.coords(), p);
}

/// Cross covariance block K(a_i, b_j).
inline Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  const MaternParams& p) {
  detail::require(a.cols() == b.cols(), "cov_matrix: dimension mismatch");
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j)
    for (Index i = 0; i < a.rows(); ++i) k(i, j) = matern((a.row(i) - b.row(j)).norm(), p);
  return k;
}

/// Linear trend mu(s) = beta_0 + sum_k beta_k s_k, plus an optional fixed
/// per-location offset (e.g. log cell area for gridded point counts).
struct MeanModel {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd offset;  // empty, or one entry per observed location

  static MeanModel constant(double c, int dim) {
    MeanModel m;
    m.coefficients = Eigen::VectorXd::Zero(dim + 1);
    m.coefficients[0] = c;
    return m;
  }
};

inline Eigen::VectorXd mean_vector(const Eigen::MatrixXd& coords, const MeanModel& m,
                                   bool with_offset = true) {
  detail::require(m.coefficients.size() == coords.cols() + 1,
                  "mean_vector: need d+1 coefficients (intercept + one slope per coordinate)");
  detail::require(m.coefficients.allFinite(), "mean_vector: coefficients must be finite");
  Eigen::VectorXd mu =
      (coords * m.coefficients.tail(coords.cols())).array() + m.coefficients[0];
  if (with_offset && m.offset.size() > 0) {
    detail::require(m.offset.size() == coords.rows(), "mean_vector: offset length mismatch");
    mu += m.offset;
  }
  return mu;
}

inline Eigen::VectorXd mean_vector(const LocationSet& locs, const MeanModel& m) {
  return mean_vector(locs.coords(), m);
}

}  // namespace vlgp
