#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include <vlgp/vlgp.hpp>

namespace vlgp::test {

// Regular g x g grid of cell centers on the unit square, first axis fastest.
inline Eigen::MatrixXd unit_grid(Index g) {
  Eigen::MatrixXd x(g * g, 2);
  for (Index i = 0; i < g * g; ++i) {
    x(i, 0) = (static_cast<double>(i % g) + 0.5) / static_cast<double>(g);
    x(i, 1) = (static_cast<double>(i / g) + 0.5) / static_cast<double>(g);
  }
  return x;
}

inline Eigen::MatrixXd unit_interval(Index n) {
  Eigen::MatrixXd x(n, 1);
  for (Index i = 0; i < n; ++i) x(i, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  return x;
}

inline Eigen::MatrixXd random_points(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) x(i, k) = rng.uniform();
  return x;
}

inline Eigen::MatrixXd shuffled_rows(const Eigen::MatrixXd& x, std::uint64_t seed, IndexList* perm = nullptr) {
  IndexList p(x.rows());
  for (Index i = 0; i < x.rows(); ++i) p[i] = i;
  std::mt19937_64 g(seed);
  std::shuffle(p.begin(), p.end(), g);
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(p[i]);
  if (perm) *perm = p;
  return out;
}

inline double rms(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::sqrt(static_cast<double>(a.size()));
}

inline double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& ref) {
  return (a - ref).norm() / ref.norm();
}

inline Theta make_theta(double variance, double range, double smoothness, Index dim,
                        Likelihood lik) {
  return Theta{{variance, range, smoothness}, MeanModel::constant(0.0, static_cast<int>(dim)), lik};
}

inline const Likelihood kAllLikelihoods[] = {Likelihood::gaussian(0.1), Likelihood::bernoulli(),
                                             Likelihood::poisson(), Likelihood::gamma(2.0)};

// Richardson-extrapolated central differences of y -> log g(z | y).
inline double fd_first(double z, double y, const Likelihood& lik, double h = 1e-3) {
  auto f = [&](double v) { return log_density(z, v, lik); };
  auto c = [&](double s) { return (f(y + s) - f(y - s)) / (2.0 * s); };
  return (4.0 * c(h / 2) - c(h)) / 3.0;
}

inline double fd_second(double z, double y, const Likelihood& lik, double h = 1e-3) {
  auto f = [&](double v) { return log_density(z, v, lik); };
  auto c = [&](double s) { return (f(y + s) - 2.0 * f(y) + f(y - s)) / (s * s); };
  return (4.0 * c(h / 2) - c(h)) / 3.0;
}

// A random (z, y) pair in the support of `lik`, with y in [-3, 3].
inline std::pair<double, double> random_zy(const Likelihood& lik, Rng& rng) {
  const double y = -3.0 + 6.0 * rng.uniform();
  double z = 0.0;
  switch (lik.family) {
    case Family::gaussian: z = y + rng.normal(); break;
    case Family::bernoulli: z = rng.uniform() < 0.5 ? 0.0 : 1.0; break;
    case Family::poisson: z = static_cast<double>(rng.poisson(std::exp(y))); break;
    case Family::gamma: z = rng.gamma(lik.param, lik.param * std::exp(-y)); break;
  }
  return {z, y};
}

inline bool rel_close(double a, double ref, double tol) {
  return std::abs(a - ref) <= tol * std::max(std::abs(ref), 1e-300);
}

}  // namespace vlgp::test
