#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <Eigen/Dense>

#include "common.hpp"
#include "inference.hpp"
#include "model.hpp"
#include "vecchia.hpp"

namespace vlgp {

/// Box for one positive parameter; the search runs on its logarithm.
struct ParamBounds {
  double lo = 1e-6;
  double hi = 1e6;
  bool free = true;
};

struct EstimateOptions {
  ParamBounds variance;
  ParamBounds range;
  ParamBounds smoothness{0.1, 5.0, false};
  ParamBounds lik_param{1e-6, 1e6, false};  // ignored for families without one
  bool estimate_beta = false;
  int max_evaluations = 400;
  double simplex_tol = 1e-4;   // characteristic simplex size at convergence
  double initial_step = 0.3;   // in log units (raw units for beta)
  bool warm_start = true;
  InferenceOptions inner;
};

struct TraceEntry {
  Theta theta;
  double loglik = std::numeric_limits<double>::quiet_NaN();
};

struct EstimateResult {
  Theta theta;
  double loglik = -std::numeric_limits<double>::infinity();
  std::vector<TraceEntry> trace;
  int evaluations = 0;
  long inner_iterations = 0;
  bool converged = false;
  std::string message;
};

namespace detail {

// Mapping between Theta and the unconstrained search vector.
struct ThetaCodec {
  Theta base;
  const EstimateOptions* opt;

  [[nodiscard]] bool lik_free() const { return opt->lik_param.free && base.likelihood.has_param(); }

  [[nodiscard]] std::size_t size() const {
    std::size_t k = 0;
    k += opt->variance.free + opt->range.free + opt->smoothness.free + lik_free();
    if (opt->estimate_beta) k += static_cast<std::size_t>(base.mean.coefficients.size());
    return k;
  }

  [[nodiscard]] std::vector<double> encode(const Theta& th) const {
    std::vector<double> x;
    if (opt->variance.free) x.push_back(std::log(th.kernel.variance));
    if (opt->range.free) x.push_back(std::log(th.kernel.range));
    if (opt->smoothness.free) x.push_back(std::log(th.kernel.smoothness));
    if (lik_free()) x.push_back(std::log(th.likelihood.param));
    if (opt->estimate_beta)
      for (Index i = 0; i < th.mean.coefficients.size(); ++i) x.push_back(th.mean.coefficients[i]);
    return x;
  }

  // Returns false when a positive parameter leaves its box.
  bool decode(const gsl_vector* x, Theta& th) const {
    th = base;
    std::size_t k = 0;
    bool inside = true;
    const auto take = [&](const ParamBounds& b, double& target) {
      target = std::exp(gsl_vector_get(x, k++));
      inside = inside && target >= b.lo && target <= b.hi;
    };
    if (opt->variance.free) take(opt->variance, th.kernel.variance);
    if (opt->range.free) take(opt->range, th.kernel.range);
    if (opt->smoothness.free) take(opt->smoothness, th.kernel.smoothness);
    if (lik_free()) take(opt->lik_param, th.likelihood.param);
    if (opt->estimate_beta)
      for (Index i = 0; i < th.mean.coefficients.size(); ++i)
        th.mean.coefficients[i] = gsl_vector_get(x, k++);
    return inside;
  }
};

struct Objective {
  const Eigen::VectorXd* z;
  const VecchiaSpec* inference_spec;
  const VecchiaSpec* likelihood_spec;
  ThetaCodec codec;
  EstimateResult* result;
  InferenceOptions inner;
  bool warm_start;

  static constexpr double kPenalty = 1e100;

  double operator()(const gsl_vector* x) {
    Theta th;
    if (!codec.decode(x, th)) return kPenalty;
    ++result->evaluations;
    try {
      LoglikResult r = integrated_loglik(*z, *inference_spec, *likelihood_spec, th, inner);
      result->inner_iterations += r.posterior.iterations;
      if (!std::isfinite(r.loglik) || !r.posterior.converged) return kPenalty;
      result->trace.push_back({th, r.loglik});
      if (warm_start) inner.warm_start = r.posterior.alpha;
      if (r.loglik > result->loglik) {
        result->loglik = r.loglik;
        result->theta = th;
      }
      return -r.loglik;
    } catch (const Error&) {
      return kPenalty;
    }
  }

  static double call(const gsl_vector* x, void* self) { return (*static_cast<Objective*>(self))(x); }
};

}  // namespace detail

/// Maximizes the integrated log-likelihood by Nelder-Mead (GSL nmsimplex2)
/// over log-transformed positive parameters, plus raw mean coefficients when
/// requested. Inner Newton runs warm-start at the previous mode.
inline EstimateResult ml_estimate(const Eigen::VectorXd& z, const VecchiaSpec& inference_spec,
                                  const VecchiaSpec& likelihood_spec, const Theta& theta0,
                                  const EstimateOptions& opt = {}) {
  theta0.validate();
  const auto within = [](const ParamBounds& b, double v) { return !b.free || (v >= b.lo && v <= b.hi); };
  detail::require(within(opt.variance, theta0.kernel.variance) && within(opt.range, theta0.kernel.range) &&
                      within(opt.smoothness, theta0.kernel.smoothness) &&
                      (!theta0.likelihood.has_param() || within(opt.lik_param, theta0.likelihood.param)),
                  "ml_estimate: starting value outside the bounds");

  EstimateResult result;
  result.theta = theta0;
  detail::Objective obj{&z, &inference_spec, &likelihood_spec, {theta0, &opt}, &result, opt.inner,
                        opt.warm_start};
  const std::size_t k = obj.codec.size();
  if (k == 0) {
    gsl_vector* none = gsl_vector_alloc(1);
    obj(none);
    gsl_vector_free(none);
    result.converged = std::isfinite(result.loglik);
    result.message = "no free parameters";
    return result;
  }

  const std::vector<double> start = obj.codec.encode(theta0);
  gsl_vector* x = gsl_vector_alloc(k);
  gsl_vector* step = gsl_vector_alloc(k);
  for (std::size_t i = 0; i < k; ++i) {
    gsl_vector_set(x, i, start[i]);
    gsl_vector_set(step, i, opt.initial_step);
  }
  gsl_multimin_function fn{&detail::Objective::call, k, &obj};
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, k);
  gsl_error_handler_t* old = gsl_set_error_handler_off();
  int status = gsl_multimin_fminimizer_set(s, &fn, x, step);
  if (status != GSL_SUCCESS) {
    result.message = std::string("optimizer setup failed: ") + gsl_strerror(status);
  } else {
    status = GSL_CONTINUE;
    while (status == GSL_CONTINUE && result.evaluations < opt.max_evaluations) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), opt.simplex_tol);
    }
    result.converged = status == GSL_SUCCESS;
    result.message = result.converged ? "converged" : "evaluation budget exhausted before the simplex shrank";
  }
  gsl_set_error_handler(old);
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  if (!std::isfinite(result.loglik)) {
    result.converged = false;
    result.message = "no parameter value produced a finite likelihood";
  }
  return result;
}

}  // namespace vlgp
