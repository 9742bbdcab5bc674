#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "geometry.hpp"
#include "likelihoods.hpp"
#include "model.hpp"
#include "random.hpp"
#include "sparse.hpp"
#include "vecchia.hpp"

namespace vlgp {

struct InferenceOptions {
  double epsilon = 1e-6;  // on the RMS step ||y_new - y|| / sqrt(n)
  int max_iter = 50;
  Eigen::VectorXd warm_start;  // caller's order; empty starts at the prior mean
};

/// Vecchia-Laplace posterior N(alpha, (V V')^{-1}).
///
/// `alpha` and `pseudo` are in the caller's location order; `V` is in the
/// specification's order, given by `ordering`.
struct LatentPosterior {
  Eigen::VectorXd alpha;
  PseudoData pseudo;
  SparseUpperTri V;
  Ordering ordering;
  int iterations = 0;
  bool converged = false;
  double last_step = std::numeric_limits<double>::infinity();
};

namespace detail {

// Prior mean by location in spec order; the offset (if any) is given in the
// caller's order.
inline Eigen::VectorXd ordered_mean(const VecchiaSpec& spec, const MeanModel& mean) {
  Eigen::VectorXd mu = mean_vector(spec.locations.coords(), mean, false);
  if (mean.offset.size() > 0) {
    require(mean.offset.size() == spec.num_locations(), "mean offset length mismatch");
    mu += spec.ordering.to_ordered(mean.offset);
  }
  return mu;
}

}  // namespace detail

/// Posterior mode by Newton iteration on Gaussian pseudo-data, with every
/// step's posterior mean taken under the Vecchia approximation of the joint
/// of latents and pseudo-data:
///   y <- mu - (V')^{-1} V^{-1} U_y U_t' (t - mu),
/// where t, D and hence U, V are recomputed from the current y. A Gaussian
/// likelihood has fixed pseudo-data, so one step reaches the mode.
inline LatentPosterior vl_inference(const Eigen::VectorXd& z, const VecchiaSpec& spec,
                                    const Theta& theta, const InferenceOptions& opt = {}) {
  theta.validate();
  const Index n = spec.num_locations();
  detail::require(spec.scheme != Scheme::prediction && spec.num_responses() == n,
                  "vl_inference: every location must be observed");
  detail::require(z.size() == n, "vl_inference: data length does not match the specification");
  detail::require(opt.max_iter >= 1 && opt.epsilon > 0.0, "vl_inference: bad iteration settings");
  theta.likelihood.check_support(z);

  const auto& ord = spec.ordering;
  const Eigen::VectorXd zo = ord.to_ordered(z);
  const Eigen::VectorXd mu = detail::ordered_mean(spec, theta.mean);
  Eigen::VectorXd y = mu;
  if (opt.warm_start.size() > 0) {
    detail::require(opt.warm_start.size() == n, "vl_inference: warm start length mismatch");
    y = ord.to_ordered(opt.warm_start);
  }

  const UAssembler assembler(spec, theta.kernel);
  LatentPosterior out;
  out.ordering = ord;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const PseudoData ps = pseudo_data(zo, y, theta.likelihood);
    const UFactor u = assembler.compute(ps.d);
    VecchiaPosterior post = posterior(u);
    Eigen::VectorXd next = posterior_mean(u, post.V, ps.t, mu);
    if (!next.allFinite()) throw NumericalError("vl_inference: non-finite iterate");
    out.last_step = (next - y).norm() / std::sqrt(static_cast<double>(n));
    y = std::move(next);
    out.V = std::move(post.V);
    out.iterations = it;
    if (theta.likelihood.family == Family::gaussian || out.last_step < opt.epsilon) {
      out.converged = true;
      break;
    }
  }
  // V above was built from D at the previous iterate; the Laplace posterior
  // wants the curvature at the returned mode.
  if (theta.likelihood.family != Family::gaussian)
    out.V = posterior(assembler.compute(pseudo_data(zo, y, theta.likelihood).d)).V;
  out.alpha = ord.to_original(y);
  out.pseudo = pseudo_data(z, out.alpha, theta.likelihood);
  return out;
}

struct LoglikResult {
  double loglik = 0.0;
  double pseudo_loglik = 0.0;  // log p(t) under the interweaved Vecchia joint
  double correction = 0.0;     // sum log g(z_i | y_i) - log N(t_i | y_i, d_i)
  LatentPosterior posterior;
};

/// Integrated log-likelihood: mode from `inference_spec`, then at
/// y = alpha the Vecchia density of the pseudo-data under the interweaved
/// `likelihood_spec` times the ratio of true to pseudo likelihoods.
inline LoglikResult integrated_loglik(const Eigen::VectorXd& z, const VecchiaSpec& inference_spec,
                                      const VecchiaSpec& likelihood_spec, const Theta& theta,
                                      const InferenceOptions& opt = {}) {
  detail::require(likelihood_spec.interweaved(),
                  "integrated_loglik: likelihood specification must use the interweaved layout");
  detail::require(likelihood_spec.num_locations() == inference_spec.num_locations(),
                  "integrated_loglik: specifications cover different location sets");
  LoglikResult out;
  out.posterior = vl_inference(z, inference_spec, theta, opt);
  const auto& post = out.posterior;

  const auto& ord = likelihood_spec.ordering;
  const Eigen::VectorXd t = ord.to_ordered(post.pseudo.t);
  const Eigen::VectorXd d = ord.to_ordered(post.pseudo.d);
  const Eigen::VectorXd mu = detail::ordered_mean(likelihood_spec, theta.mean);
  const UFactor u = compute_U(likelihood_spec, theta.kernel, d);
  const VecchiaPosterior vp = posterior(u);
  out.pseudo_loglik = pseudo_data_loglik(u, vp.V, t, mu);

  for (Index i = 0; i < z.size(); ++i) {
    out.correction += log_density(z[i], post.alpha[i], theta.likelihood) -
                      gaussian_log_density(post.pseudo.t[i], post.alpha[i], post.pseudo.d[i]);
  }
  out.loglik = out.pseudo_loglik + out.correction;
  return out;
}

inline LoglikResult integrated_loglik(const Eigen::VectorXd& z, const VecchiaSpec& spec,
                                      const Theta& theta, const InferenceOptions& opt = {}) {
  return integrated_loglik(z, spec, spec, theta, opt);
}

struct GridPoint {
  Theta theta;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool ok = false;
  std::string error;
};

/// Integrated log-likelihood at each parameter value. Failures are recorded
/// per point and the sweep continues. With `warm_start`, each inner Newton
/// run starts from the previous successful mode.
inline std::vector<GridPoint> loglik_grid(const Eigen::VectorXd& z,
                                          const VecchiaSpec& inference_spec,
                                          const VecchiaSpec& likelihood_spec,
                                          const std::vector<Theta>& grid,
                                          InferenceOptions opt = {}, bool warm_start = true) {
  std::vector<GridPoint> out;
  out.reserve(grid.size());
  for (const auto& th : grid) {
    GridPoint gp{th, std::numeric_limits<double>::quiet_NaN(), 0, false, {}};
    try {
      auto r = integrated_loglik(z, inference_spec, likelihood_spec, th, opt);
      gp.loglik = r.loglik;
      gp.iterations = r.posterior.iterations;
      gp.ok = std::isfinite(r.loglik);
      if (!r.posterior.converged) gp.error = "inner Newton iteration did not converge";
      if (warm_start && gp.ok) opt.warm_start = r.posterior.alpha;
    } catch (const Error& e) {
      gp.error = e.what();
    }
    out.push_back(std::move(gp));
  }
  return out;
}

/// Draws mean + (V')^{-1} e with e standard normal; one sample per column,
/// covariance (V V')^{-1}. `mean` is in V's order.
inline Eigen::MatrixXd sample_posterior(const SparseUpperTri& v, const Eigen::VectorXd& mean,
                                        Index count, std::uint64_t seed) {
  detail::require(count >= 1, "sample_posterior: count must be >= 1");
  detail::require(mean.size() == v.dim(), "sample_posterior: dimension mismatch");
  Rng rng(seed);
  Eigen::MatrixXd out(v.dim(), count);
  Eigen::VectorXd e(v.dim());
  for (Index c = 0; c < count; ++c) {
    for (Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
    out.col(c) = mean + solve_upper(v, e, true);
  }
  return out;
}

/// E(data | z) for a latent N(mean, var) marginal. Log-link families use
/// exp(mean + var/2); Bernoulli averages the logistic over `samples` draws.
inline double data_scale_mean(const Likelihood& lik, double mean, double var, Rng& rng,
                              int samples = 2000) {
  switch (lik.family) {
    case Family::gaussian: return mean;
    case Family::poisson:
    case Family::gamma: return std::exp(mean + 0.5 * var);
    case Family::bernoulli: {
      const double sd = std::sqrt(std::max(var, 0.0));
      double s = 0.0;
      for (int k = 0; k < samples; ++k) s += 1.0 / (1.0 + std::exp(-(mean + sd * rng.normal())));
      return s / samples;
    }
  }
  return mean;
}

struct PredictionOptions {
  Index m = 30;
  int data_samples = 2000;
  int joint_samples = 0;
  std::uint64_t seed = 0;
};

/// Latent predictions at unobserved locations, in the caller's order.
struct PredictionResult {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd data_mean;
  Eigen::VectorXd observed_mean;  // posterior mean at the observed locations
  Eigen::MatrixXd samples;        // joint draws of the predictions, one per column
};

/// Prediction from a converged posterior: a response-first Vecchia joint over
/// the pseudo-data (fixed at the mode), the observed latents and the new
/// latents. Variances are ||V^{-1} e_i||^2 of the joint posterior factor.
inline PredictionResult predict(const LatentPosterior& post, const LocationSet& observed,
                                const Eigen::MatrixXd& unobserved, const Theta& theta,
                                const PredictionOptions& opt = {}) {
  theta.validate();
  const Index n = observed.size();
  detail::require(post.alpha.size() == n, "predict: posterior does not match observed locations");
  detail::require(post.converged, "predict: posterior did not converge");
  const VecchiaSpec spec = build_spec_prediction(observed.coords(), unobserved, opt.m);
  const Index total = spec.num_locations();
  const auto& perm = spec.ordering.perm;

  Eigen::VectorXd mu = mean_vector(spec.locations.coords(), theta.mean, false);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(total);
  Eigen::VectorXd d = Eigen::VectorXd::Ones(total);
  for (Index k = 0; k < total; ++k) {
    const Index j = perm[k];
    if (j >= n) continue;
    if (theta.mean.offset.size() > 0) mu[k] += theta.mean.offset[j];
    t[k] = post.pseudo.t[j];
    d[k] = post.pseudo.d[j];
  }

  const UFactor u = compute_U(spec, theta.kernel, d);
  const VecchiaPosterior vp = posterior(u);
  const Eigen::VectorXd mean = posterior_mean(u, vp.V, t, mu);

  const Index np = unobserved.rows();
  PredictionResult out;
  out.mean.resize(np);
  out.observed_mean.resize(n);
  IndexList pred_rows(np);
  for (Index k = 0; k < total; ++k) {
    const Index j = perm[k];
    if (j < n) {
      out.observed_mean[j] = mean[k];
    } else {
      out.mean[j - n] = mean[k];
      pred_rows[j - n] = k;
    }
  }
  out.variance = inverse_diagonal(vp.V, pred_rows);

  Rng rng(opt.seed);
  out.data_mean.resize(np);
  for (Index i = 0; i < np; ++i)
    out.data_mean[i] =
        data_scale_mean(theta.likelihood, out.mean[i], out.variance[i], rng, opt.data_samples);

  if (opt.joint_samples > 0 && np > 0) {
    const Eigen::MatrixXd all = sample_posterior(vp.V, mean, opt.joint_samples, opt.seed + 1);
    out.samples.resize(np, opt.joint_samples);
    for (Index i = 0; i < np; ++i) out.samples.row(i) = all.row(pred_rows[i]);
  }
  return out;
}

}  // namespace vlgp
