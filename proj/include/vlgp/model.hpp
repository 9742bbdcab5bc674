#pragma once

#include "kernels.hpp"
#include "likelihoods.hpp"

namespace vlgp {

/// Full parameter set of a generalized GP: covariance, mean trend and the
/// observation model (whose scalar parameter, if any, lives inside it).
struct Theta {
  MaternParams kernel;
  MeanModel mean;
  Likelihood likelihood;

  void validate() const {
    kernel.validate();
    likelihood.validate();
  }
};

}  // namespace vlgp
