#pragma once

// Independent oracles shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "hdlogit/dataset.hpp"
#include "hdlogit/rng.hpp"
#include "hdlogit/sim_harness.hpp"

namespace hdlogit::oracle {

/// Root of lambda * sigmoid(x) + x = z by plain bisection in long double.
inline double bisect_prox(double lambda, double z) {
  long double lo = static_cast<long double>(z) - lambda - 1.0L;
  long double hi = static_cast<long double>(z) + 1.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    const long double f = lambda / (1.0L + std::exp(-mid)) + mid - z;
    if (f > 0.0L) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return static_cast<double>(0.5L * (lo + hi));
}

/// Mean and standard error of a running sample.
struct McMean {
  double sum = 0.0;
  double sum_sq = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double se() const {
    const double m = mean();
    const double var = (sum_sq / static_cast<double>(n) - m * m) * n / (n - 1.0);
    return std::sqrt(var / static_cast<double>(n));
  }
};

/// Gaussian design with half_const coefficients scaled to gamma.
inline Dataset simulated_dataset(Eigen::Index n, Eigen::Index p, double gamma, std::uint64_t seed,
                                 Eigen::VectorXd* beta_out = nullptr) {
  Rng rb = make_rng(seed, 0, stream_tag::beta);
  const Eigen::VectorXd beta =
      gen_beta(BetaPattern::half_const(1.0), p, gamma, 1.0 / static_cast<double>(n), rb);
  Rng rd = make_rng(seed, 0, stream_tag::data);
  Dataset d;
  d.X = gen_gaussian_design(n, p, rd);
  d.y = gen_response(d.X, beta, rd);
  d.design_tag = DesignTag::gaussian;
  if (beta_out != nullptr) {
    *beta_out = beta;
  }
  return d;
}

} // namespace hdlogit::oracle
