#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace vlgp;

TEST(LogDensity, HandValues) {
  EXPECT_NEAR(log_density(0.7, 0.7, Likelihood::gaussian(1.0)), -0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(log_density(1.0, 0.0, Likelihood::bernoulli()), std::log(0.5), 1e-15);
  EXPECT_NEAR(log_density(2.0, 0.0, Likelihood::poisson()), -1.0 - std::log(2.0), 1e-14);
  // Gamma(shape 2, rate 2) at z = 1: 4 z e^{-2z}
  EXPECT_NEAR(log_density(1.0, 0.0, Likelihood::gamma(2.0)), std::log(4.0) - 2.0, 1e-14);
}

TEST(LogDensity, BernoulliStableAtExtremes) {
  EXPECT_NEAR(log_density(1.0, 800.0, Likelihood::bernoulli()), 0.0, 1e-15);
  EXPECT_NEAR(log_density(0.0, -800.0, Likelihood::bernoulli()), 0.0, 1e-15);
  EXPECT_NEAR(log_density(0.0, 800.0, Likelihood::bernoulli()), -800.0, 1e-9);
}

TEST(LogDensity, SupportChecks) {
  EXPECT_THROW(log_density(0.5, 0.0, Likelihood::bernoulli()), InvalidArgument);
  EXPECT_THROW(log_density(-1.0, 0.0, Likelihood::poisson()), InvalidArgument);
  EXPECT_THROW(log_density(1.5, 0.0, Likelihood::poisson()), InvalidArgument);
  EXPECT_THROW(log_density(0.0, 0.0, Likelihood::gamma(2.0)), InvalidArgument);
  EXPECT_THROW(Likelihood::gaussian(0.0).validate(), InvalidArgument);
  EXPECT_THROW(Likelihood::gamma(-1.0).validate(), InvalidArgument);
}

TEST(ScoreU, HandValues) {
  EXPECT_EQ(score_u(1.0, 0.0, Likelihood::poisson()), 0.0);
  EXPECT_EQ(score_u(1.0, 0.0, Likelihood::bernoulli()), 0.5);
  EXPECT_EQ(score_u(3.0, 1.0, Likelihood::gaussian(0.5)), 4.0);
  EXPECT_NEAR(score_u(1.0, 0.0, Likelihood::gamma(2.0)), 0.0, 1e-15);
}

TEST(PseudoVariance, HandValues) {
  EXPECT_EQ(pseudo_variance_d(1.0, 0.0, Likelihood::bernoulli()), 4.0);
  EXPECT_EQ(pseudo_variance_d(0.0, 0.0, Likelihood::poisson()), 1.0);
  EXPECT_EQ(pseudo_variance_d(0.0, 0.0, Likelihood::gaussian(0.3)), 0.3);
  EXPECT_EQ(pseudo_variance_d(1.0, 0.0, Likelihood::gamma(2.0)), 0.5);
}

TEST(PseudoVariance, Clamped) {
  EXPECT_EQ(pseudo_variance_d(0.0, 1000.0, Likelihood::poisson()), kMinPseudoVariance);
  EXPECT_EQ(pseudo_variance_d(0.0, -1000.0, Likelihood::poisson()), kMaxPseudoVariance);
  EXPECT_EQ(pseudo_variance_d(1.0, 800.0, Likelihood::bernoulli()), kMaxPseudoVariance);
}

TEST(Derivatives, MatchFiniteDifferences) {
  for (const auto& lik : test::kAllLikelihoods) {
    Rng rng(77);
    for (int k = 0; k < 100; ++k) {
      const auto [z, y] = test::random_zy(lik, rng);
      EXPECT_TRUE(test::rel_close(score_u(z, y, lik), test::fd_first(z, y, lik), 1e-6))
          << to_string(lik.family) << " z=" << z << " y=" << y;
      EXPECT_TRUE(test::rel_close(-1.0 / pseudo_variance_d(z, y, lik), test::fd_second(z, y, lik), 1e-5))
          << to_string(lik.family) << " z=" << z << " y=" << y;
    }
  }
}

TEST(PseudoData, HandValues) {
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(1), zero = Eigen::VectorXd::Zero(1);
  auto p = pseudo_data(one, zero, Likelihood::poisson());
  EXPECT_EQ(p.t[0], 0.0);
  EXPECT_EQ(p.d[0], 1.0);
  p = pseudo_data(one, zero, Likelihood::bernoulli());
  EXPECT_EQ(p.t[0], 2.0);
  EXPECT_EQ(p.d[0], 4.0);
  p = pseudo_data(one, zero, Likelihood::gamma(2.0));
  EXPECT_NEAR(p.t[0], 0.0, 1e-15);
  EXPECT_EQ(p.d[0], 0.5);
}

TEST(PseudoData, GaussianIsDataItself) {
  const Eigen::VectorXd z = test::random_points(30, 1, 3).col(0);
  const Eigen::VectorXd y = test::random_points(30, 1, 4).col(0) * 10.0;
  const auto p = pseudo_data(z, y, Likelihood::gaussian(0.2));
  EXPECT_TRUE(p.t == z);
  EXPECT_TRUE((p.d.array() == 0.2).all());
}

TEST(PseudoData, GammaMatchesTableExpression) {
  Rng rng(5);
  const auto lik = Likelihood::gamma(2.0);
  for (int k = 0; k < 100; ++k) {
    const auto [z, y] = test::random_zy(lik, rng);
    const Eigen::VectorXd zv = Eigen::VectorXd::Constant(1, z), yv = Eigen::VectorXd::Constant(1, y);
    EXPECT_NEAR(pseudo_data(zv, yv, lik).t[0], y + (1.0 - std::exp(y) / z), 1e-12 * std::max(1.0, std::exp(y) / z));
  }
}

TEST(Family, NamesRoundTrip) {
  for (const auto& lik : test::kAllLikelihoods)
    EXPECT_EQ(family_from_string(to_string(lik.family)), lik.family);
  EXPECT_THROW(family_from_string("cauchy"), InvalidArgument);
}

TEST(PseudoData, MatchesDefinitionAndStaysFinite) {
  for (const auto& lik : test::kAllLikelihoods) {
    Rng rng(9);
    for (int k = 0; k < 100; ++k) {
      const auto [z, y] = test::random_zy(lik, rng);
      const double direct = y + pseudo_variance_d(z, y, lik) * score_u(z, y, lik);
      EXPECT_NEAR(pseudo_observation(z, y, lik), direct, 1e-10 * std::max(1.0, std::abs(direct)))
          << to_string(lik.family);
    }
  }
  EXPECT_NEAR(pseudo_observation(57.0, 56.0, Likelihood::poisson()), 55.0, 1e-9);
}
