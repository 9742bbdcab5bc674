#pragma once

#include <cstdint>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <boost/random/uniform_01.hpp>

namespace vlgp {

/// Seeded generator with fixed, platform-independent output: 64-bit
/// Mersenne Twister with Boost.Random's distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return boost::random::normal_distribution<double>(0.0, 1.0)(engine_); }
  double uniform() { return boost::random::uniform_01<double>()(engine_); }
  bool bernoulli(double p) { return boost::random::bernoulli_distribution<double>(p)(engine_); }
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    return boost::random::poisson_distribution<long, double>(mean)(engine_);
  }
  /// Gamma with the given shape and rate (mean shape / rate).
  double gamma(double shape, double rate) {
    return boost::random::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }

  boost::random::mt19937_64& engine() { return engine_; }

 private:
  boost::random::mt19937_64 engine_;
};

}  // namespace vlgp
