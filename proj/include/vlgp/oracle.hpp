#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "geometry.hpp"
#include "kernels.hpp"
#include "likelihoods.hpp"
#include "model.hpp"
#include "random.hpp"

// Dense O(n^3) reference implementations: simulation, exact Gaussian
// posteriors and the full Laplace approximation.
namespace vlgp::oracle {

inline constexpr Index kMaxDenseSize = 20000;
inline constexpr double kSimulationJitter = 1e-10;

namespace detail {
inline void guard(Index n) {
  vlgp::detail::require(n <= kMaxDenseSize, "dense oracle: n exceeds the dense-size guard");
}

// log N(r; 0, A) from a Cholesky factor of A.
inline double gaussian_logpdf(const Eigen::VectorXd& r, const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::VectorXd w = llt.matrixL().solve(r);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet +
                 static_cast<double>(r.size()) * std::log(2.0 * std::numbers::pi));
}

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(what, -1);
  return llt;
}
}  // namespace detail

/// Prior N(mu, K) of a GP at a finite set of points.
struct DenseGP {
  Eigen::VectorXd mu;
  Eigen::MatrixXd K;
  Eigen::LLT<Eigen::MatrixXd> chol;

  DenseGP(const Eigen::MatrixXd& coords, const MaternParams& kernel, const MeanModel& mean,
          double jitter = 0.0)
      : mu(mean_vector(coords, mean)), K(cov_matrix(coords, kernel)) {
    detail::guard(coords.rows());
    if (jitter > 0.0) K.diagonal().array() += jitter * kernel.variance;
    chol = detail::checked_llt(K, "DenseGP: covariance not positive definite");
  }
};

/// mu + L e with L = chol(K + 1e-10 sigma^2 I).
inline Eigen::VectorXd simulate_gp(const Eigen::MatrixXd& coords, const MaternParams& kernel,
                                   const MeanModel& mean, std::uint64_t seed) {
  const DenseGP gp(coords, kernel, mean, kSimulationJitter);
  Rng rng(seed);
  Eigen::VectorXd e(coords.rows());
  for (Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  return gp.mu + gp.chol.matrixL() * e;
}

/// Approximate GP draw for sizes beyond dense reach: sequential conditional
/// simulation in maxmin order, each point conditioned on its `m` nearest
/// predecessors.
inline Eigen::VectorXd simulate_gp_vecchia(const LocationSet& locs, const MaternParams& kernel,
                                           const MeanModel& mean, Index m, std::uint64_t seed) {
  const Ordering ord = maxmin_order(locs);
  const LocationSet o = locs.permuted(ord.perm);
  const Eigen::VectorXd mu = ord.to_ordered(mean_vector(locs.coords(), mean));
  Rng rng(seed);
  Eigen::VectorXd y(o.size());
  for (Index i = 0; i < o.size(); ++i) {
    const IndexList c = nearest_m_previous(o, i, m);
    double cmean = mu[i];
    double var = kernel.variance;
    if (!c.empty()) {
      const Index k = static_cast<Index>(c.size());
      Eigen::MatrixXd cc(k, k);
      Eigen::VectorXd ck(k), resid(k);
      for (Index a = 0; a < k; ++a) {
        ck[a] = matern(o.distance(c[a], i), kernel);
        resid[a] = y[c[a]] - mu[c[a]];
        for (Index b = 0; b < k; ++b) cc(a, b) = matern(o.distance(c[a], c[b]), kernel);
      }
      const Eigen::VectorXd w = cc.llt().solve(ck);
      cmean += w.dot(resid);
      var = std::max(var - w.dot(ck), 0.0);
    }
    y[i] = cmean + std::sqrt(var) * rng.normal();
  }
  return ord.to_original(y);
}

/// Independent draws z_i ~ g(. | y_i).
inline Eigen::VectorXd simulate_data(const Eigen::VectorXd& y, const Likelihood& lik,
                                     std::uint64_t seed) {
  lik.validate();
  vlgp::detail::require(y.allFinite(), "simulate_data: latent values must be finite");
  Rng rng(seed);
  Eigen::VectorXd z(y.size());
  for (Index i = 0; i < y.size(); ++i) {
    switch (lik.family) {
      case Family::gaussian: z[i] = y[i] + std::sqrt(lik.param) * rng.normal(); break;
      case Family::bernoulli: z[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-y[i]))) ? 1.0 : 0.0; break;
      case Family::poisson: z[i] = static_cast<double>(rng.poisson(std::exp(y[i]))); break;
      case Family::gamma: {
        double v = rng.gamma(lik.param, lik.param * std::exp(-y[i]));
        z[i] = v > 0.0 ? v : std::numeric_limits<double>::min();
        break;
      }
    }
  }
  return z;
}

/// Unnormalized log posterior log N(y | mu, K) + sum log g(z_i | y_i).
inline double log_posterior(const Eigen::VectorXd& y, const Eigen::VectorXd& z, const DenseGP& gp,
                            const Likelihood& lik) {
  double s = detail::gaussian_logpdf(y - gp.mu, gp.chol);
  for (Index i = 0; i < y.size(); ++i) s += log_density(z[i], y[i], lik);
  return s;
}

/// Newton step written directly: y + W^{-1} (K^{-1} (mu - y) + u), with
/// W = K^{-1} + D^{-1}.
inline Eigen::VectorXd newton_step_raw(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                       const DenseGP& gp, const Likelihood& lik) {
  const Index n = y.size();
  Eigen::VectorXd u(n), dinv(n);
  for (Index i = 0; i < n; ++i) {
    u[i] = score_u(z[i], y[i], lik);
    dinv[i] = 1.0 / pseudo_variance_d(z[i], y[i], lik);
  }
  Eigen::MatrixXd w = gp.chol.solve(Eigen::MatrixXd::Identity(n, n));
  w.diagonal() += dinv;
  const Eigen::VectorXd grad = gp.chol.solve(gp.mu - y) + u;
  return y + detail::checked_llt(w, "newton_step_raw: W not positive definite").solve(grad);
}

/// The same step as a posterior mean given pseudo-data:
/// mu + W^{-1} D^{-1} (t - mu).
inline Eigen::VectorXd newton_step_pseudo(const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                                          const DenseGP& gp, const Likelihood& lik) {
  const Index n = y.size();
  const PseudoData ps = pseudo_data(z, y, lik);
  Eigen::MatrixXd w = gp.chol.solve(Eigen::MatrixXd::Identity(n, n));
  w.diagonal() += ps.d.cwiseInverse();
  const Eigen::VectorXd rhs = (ps.t - gp.mu).cwiseQuotient(ps.d);
  return gp.mu + detail::checked_llt(w, "newton_step_pseudo: W not positive definite").solve(rhs);
}

struct DenseLaplaceOptions {
  double epsilon = 1e-10;  // RMS step
  int max_iter = 100;
};

struct DenseLaplaceResult {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd W;  // K^{-1} + D^{-1} at the mode
  PseudoData pseudo;  // at the mode
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> log_posterior;  // after each iteration
};

/// Full Laplace approximation. Each Newton step is the GP posterior mean
/// mu + K (K + D)^{-1} (t - mu) given pseudo-data; the integrated
/// log-likelihood is log N(t; mu, K + D) + sum [log g - log N(t_i | alpha_i, d_i)]
/// at the mode.
inline DenseLaplaceResult dense_laplace(const Eigen::VectorXd& z, const Eigen::MatrixXd& coords,
                                        const Theta& theta, const DenseLaplaceOptions& opt = {}) {
  theta.validate();
  const Index n = coords.rows();
  vlgp::detail::require(z.size() == n, "dense_laplace: data length mismatch");
  theta.likelihood.check_support(z);
  const DenseGP gp(coords, theta.kernel, theta.mean);
  const auto& lik = theta.likelihood;

  DenseLaplaceResult out;
  Eigen::VectorXd y = gp.mu;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const PseudoData ps = pseudo_data(z, y, lik);
    Eigen::MatrixXd a = gp.K;
    a.diagonal() += ps.d;
    const auto llt = detail::checked_llt(a, "dense_laplace: K + D not positive definite");
    Eigen::VectorXd next = gp.mu + gp.K * llt.solve(ps.t - gp.mu);
    if (!next.allFinite()) throw NumericalError("dense_laplace: non-finite iterate");
    const double step = (next - y).norm() / std::sqrt(static_cast<double>(n));
    y = std::move(next);
    out.iterations = it;
    out.log_posterior.push_back(log_posterior(y, z, gp, lik));
    if (lik.family == Family::gaussian || step < opt.epsilon) {
      out.converged = true;
      break;
    }
  }

  out.alpha = y;
  out.pseudo = pseudo_data(z, y, lik);
  Eigen::MatrixXd a = gp.K;
  a.diagonal() += out.pseudo.d;
  out.loglik = detail::gaussian_logpdf(out.pseudo.t - gp.mu,
                                       detail::checked_llt(a, "dense_laplace: K + D not positive definite"));
  for (Index i = 0; i < n; ++i)
    out.loglik += log_density(z[i], y[i], lik) -
                  gaussian_log_density(out.pseudo.t[i], y[i], out.pseudo.d[i]);
  out.W = gp.chol.solve(Eigen::MatrixXd::Identity(n, n));
  out.W.diagonal() += out.pseudo.d.cwiseInverse();
  out.W = 0.5 * (out.W + out.W.transpose()).eval();
  return out;
}

/// log N(z; mu, K + tau^2 I)
inline double exact_gaussian_marginal(const Eigen::VectorXd& z, const Eigen::MatrixXd& coords,
                                      const MaternParams& kernel, const MeanModel& mean,
                                      double tau2) {
  detail::guard(coords.rows());
  Eigen::MatrixXd a = cov_matrix(coords, kernel);
  a.diagonal().array() += tau2;
  return detail::gaussian_logpdf(z - mean_vector(coords, mean),
                                 detail::checked_llt(a, "exact_gaussian_marginal: not positive definite"));
}

struct DenseKriging {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// GP prediction given Gaussian (pseudo-)data t with noise variances d at
/// the observed points. The mean offset, if any, applies to observed rows.
inline DenseKriging dense_kriging(const Eigen::MatrixXd& observed, const Eigen::VectorXd& t,
                                  const Eigen::VectorXd& d, const Eigen::MatrixXd& unobserved,
                                  const Theta& theta) {
  detail::guard(observed.rows());
  Eigen::MatrixXd a = cov_matrix(observed, theta.kernel);
  a.diagonal() += d;
  const auto llt = detail::checked_llt(a, "dense_kriging: K + D not positive definite");
  const Eigen::MatrixXd kx = cov_matrix(unobserved, observed, theta.kernel);
  const Eigen::VectorXd mu_o = mean_vector(observed, theta.mean);
  const Eigen::VectorXd mu_p = mean_vector(unobserved, theta.mean, false);
  DenseKriging out;
  out.mean = mu_p + kx * llt.solve(t - mu_o);
  const Eigen::MatrixXd s = llt.matrixL().solve(kx.transpose());
  out.variance = (theta.kernel.variance - s.colwise().squaredNorm().array()).matrix().transpose();
  return out;
}

/// Gridded counts of a point pattern. Cells are numbered with the first
/// coordinate varying fastest; `centers` follows that numbering.
struct LgcpGrid {
  LocationSet centers;
  Eigen::VectorXd counts;
  Eigen::VectorXd areas;  // cell volumes |A_i|
};

inline LgcpGrid lgcp_grid(const Eigen::MatrixXd& points, const Eigen::VectorXd& lo,
                          const Eigen::VectorXd& hi, Index cells_per_axis) {
  const Index d = lo.size();
  vlgp::detail::require(d >= 1 && hi.size() == d, "lgcp_grid: box dimension mismatch");
  vlgp::detail::require(points.rows() == 0 || points.cols() == d, "lgcp_grid: point dimension mismatch");
  vlgp::detail::require(cells_per_axis >= 1, "lgcp_grid: need at least one cell per axis");
  vlgp::detail::require((hi - lo).minCoeff() > 0.0, "lgcp_grid: empty box");
  Index ncell = 1;
  for (Index k = 0; k < d; ++k) ncell *= cells_per_axis;
  const Eigen::VectorXd width = (hi - lo) / static_cast<double>(cells_per_axis);

  Eigen::MatrixXd centers(ncell, d);
  for (Index c = 0; c < ncell; ++c) {
    Index rest = c;
    for (Index k = 0; k < d; ++k) {
      centers(c, k) = lo[k] + (static_cast<double>(rest % cells_per_axis) + 0.5) * width[k];
      rest /= cells_per_axis;
    }
  }

  Eigen::VectorXd counts = Eigen::VectorXd::Zero(ncell);
  for (Index p = 0; p < points.rows(); ++p) {
    Index cell = 0, stride = 1;
    for (Index k = 0; k < d; ++k) {
      const double x = points(p, k);
      if (!(x >= lo[k] && x <= hi[k]))
        throw InvalidArgument("lgcp_grid: point " + std::to_string(p) + " outside the box");
      Index idx = static_cast<Index>(std::floor((x - lo[k]) / width[k]));
      idx = std::min(idx, cells_per_axis - 1);
      cell += idx * stride;
      stride *= cells_per_axis;
    }
    counts[cell] += 1.0;
  }
  return {LocationSet(std::move(centers)), std::move(counts),
          Eigen::VectorXd::Constant(ncell, width.prod())};
}

/// Points of an inhomogeneous Poisson process with piecewise-constant
/// intensity exp(y_c) on the cells of a regular grid over the box.
inline Eigen::MatrixXd simulate_poisson_points(const Eigen::VectorXd& log_intensity,
                                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                               Index cells_per_axis, std::uint64_t seed) {
  const Index d = lo.size();
  const Eigen::VectorXd width = (hi - lo) / static_cast<double>(cells_per_axis);
  const double area = width.prod();
  Rng rng(seed);
  std::vector<double> flat;
  for (Index c = 0; c < log_intensity.size(); ++c) {
    const long k = rng.poisson(area * std::exp(log_intensity[c]));
    for (long p = 0; p < k; ++p) {
      Index rest = c;
      for (Index a = 0; a < d; ++a) {
        flat.push_back(lo[a] + (static_cast<double>(rest % cells_per_axis) + rng.uniform()) * width[a]);
        rest /= cells_per_axis;
      }
    }
  }
  const Index np = static_cast<Index>(flat.size()) / d;
  Eigen::MatrixXd pts(np, d);
  for (Index p = 0; p < np; ++p)
    for (Index a = 0; a < d; ++a) pts(p, a) = flat[p * d + a];
  return pts;
}

/// Regular grid of cell centers (first coordinate fastest) on a box.
inline Eigen::MatrixXd grid_centers(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                    Index cells_per_axis) {
  const Index d = lo.size();
  Index ncell = 1;
  for (Index k = 0; k < d; ++k) ncell *= cells_per_axis;
  const Eigen::VectorXd width = (hi - lo) / static_cast<double>(cells_per_axis);
  Eigen::MatrixXd out(ncell, d);
  for (Index c = 0; c < ncell; ++c) {
    Index rest = c;
    for (Index k = 0; k < d; ++k) {
      out(c, k) = lo[k] + (static_cast<double>(rest % cells_per_axis) + 0.5) * width[k];
      rest /= cells_per_axis;
    }
  }
  return out;
}

}  // namespace vlgp::oracle
