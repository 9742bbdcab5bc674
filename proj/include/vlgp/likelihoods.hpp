#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "common.hpp"

namespace vlgp {

enum class Family { gaussian, bernoulli, poisson, gamma };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::bernoulli: return "bernoulli";
    case Family::poisson: return "poisson";
    case Family::gamma: return "gamma";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "bernoulli") return Family::bernoulli;
  if (s == "poisson") return Family::poisson;
  if (s == "gamma") return Family::gamma;
  throw InvalidArgument("unknown likelihood '" + s + "'");
}

/// Observation model g(z | y). `param` is the noise variance tau^2 for
/// Gaussian and the shape a for Gamma (log link, rate a e^{-y}); it is
/// unused for Bernoulli (logit) and Poisson (log).
struct Likelihood {
  Family family = Family::gaussian;
  double param = 1.0;

  static Likelihood gaussian(double tau2) { return {Family::gaussian, tau2}; }
  static Likelihood bernoulli() { return {Family::bernoulli, 1.0}; }
  static Likelihood poisson() { return {Family::poisson, 1.0}; }
  static Likelihood gamma(double shape) { return {Family::gamma, shape}; }

  bool has_param() const { return family == Family::gaussian || family == Family::gamma; }

  void validate() const {
    if (has_param())
      detail::require(std::isfinite(param) && param > 0.0,
                      "Likelihood: " + to_string(family) + " parameter must be positive");
  }

  bool in_support(double z) const {
    switch (family) {
      case Family::gaussian: return std::isfinite(z);
      case Family::bernoulli: return z == 0.0 || z == 1.0;
      case Family::poisson: return std::isfinite(z) && z >= 0.0 && z == std::floor(z);
      case Family::gamma: return std::isfinite(z) && z > 0.0;
    }
    return false;
  }

  void check_support(double z) const {
    if (!in_support(z))
      throw InvalidArgument("observation " + std::to_string(z) + " outside the support of the " +
                            to_string(family) + " likelihood");
  }

  void check_support(const Eigen::VectorXd& z) const {
    for (Index i = 0; i < z.size(); ++i) check_support(z[i]);
  }
};

inline constexpr double kMinPseudoVariance = 1e-10;
inline constexpr double kMaxPseudoVariance = 1e10;

/// log g(z | y), normalizing constants included.
inline double log_density(double z, double y, const Likelihood& lik) {
  lik.check_support(z);
  switch (lik.family) {
    case Family::gaussian: {
      const double r = z - y;
      return -0.5 * std::log(2.0 * std::numbers::pi * lik.param) - 0.5 * r * r / lik.param;
    }
    case Family::bernoulli:
      // z y - log(1 + e^y)
      return z * y - (std::max(y, 0.0) + std::log1p(std::exp(-std::abs(y))));
    case Family::poisson: return z * y - std::exp(y) - std::lgamma(z + 1.0);
    case Family::gamma: {
      const double a = lik.param;
      return a * std::log(a) - a * y + (a - 1.0) * std::log(z) - a * z * std::exp(-y) -
             std::lgamma(a);
    }
  }
  return 0.0;
}

/// u(y) = d/dy log g(z | y).
inline double score_u(double z, double y, const Likelihood& lik) {
  lik.check_support(z);
  switch (lik.family) {
    case Family::gaussian: return (z - y) / lik.param;
    case Family::bernoulli: return z - 1.0 / (1.0 + std::exp(-y));
    case Family::poisson: return z - std::exp(y);
    case Family::gamma: return lik.param * (z * std::exp(-y) - 1.0);
  }
  return 0.0;
}

/// d(y) = -(d^2/dy^2 log g(z | y))^{-1}, clamped to [1e-10, 1e10].
///
/// Gamma uses the value implied by the log-density, (a z e^{-y})^{-1}.
inline double pseudo_variance_d(double z, double y, const Likelihood& lik) {
  lik.check_support(z);
  double d = 0.0;
  switch (lik.family) {
    case Family::gaussian: d = lik.param; break;
    case Family::bernoulli: d = 2.0 + std::exp(y) + std::exp(-y); break;
    case Family::poisson: d = std::exp(-y); break;
    case Family::gamma: d = std::exp(y) / (lik.param * z); break;
  }
  if (std::isnan(d)) d = kMaxPseudoVariance;
  return std::clamp(d, kMinPseudoVariance, kMaxPseudoVariance);
}

/// Gaussian pseudo-observations t = y + d u and their variances d.
struct PseudoData {
  Eigen::VectorXd t;
  Eigen::VectorXd d;
};

/// t = y + d u with the product d u simplified analytically, so t stays
/// finite where d alone would under- or overflow and be clamped.
inline double pseudo_observation(double z, double y, const Likelihood& lik) {
  lik.check_support(z);
  switch (lik.family) {
    case Family::gaussian: return z;
    case Family::bernoulli: return z == 1.0 ? y + 1.0 + std::exp(-y) : y - 1.0 - std::exp(y);
    case Family::poisson: return y - 1.0 + z * std::exp(-y);
    case Family::gamma: return y + 1.0 - std::exp(y) / z;
  }
  return y;
}

inline PseudoData pseudo_data(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                              const Likelihood& lik) {
  detail::require(z.size() == y.size(), "pseudo_data: length mismatch");
  PseudoData out{Eigen::VectorXd(z.size()), Eigen::VectorXd(z.size())};
  for (Index i = 0; i < z.size(); ++i) {
    out.d[i] = pseudo_variance_d(z[i], y[i], lik);
    out.t[i] = pseudo_observation(z[i], y[i], lik);
  }
  return out;
}

/// log N(t | y, d)
inline double gaussian_log_density(double t, double y, double d) {
  const double r = t - y;
  return -0.5 * std::log(2.0 * std::numbers::pi * d) - 0.5 * r * r / d;
}

}  // namespace vlgp
