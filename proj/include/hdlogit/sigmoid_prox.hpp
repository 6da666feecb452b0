#pragma once

// Scalar kernels for the logistic potential rho(t) = log(1 + e^t).

#include <cmath>
#include <limits>

#include "hdlogit/errors.hpp"

namespace hdlogit {

inline double rho(double t) {
  // t + log1p(e^{-t}) for positive t never overflows.
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

/// The sigmoid e^t / (1 + e^t).
inline double rho_prime(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double rho_double_prime(double t) {
  const double s = rho_prime(t);
  return s * (1.0 - s);
}

struct ProxResult {
  double x = 0.0;
  bool converged = false;
  int iterations = 0;
};

/// Proximal point of lambda * rho at z: the root of lambda * rho'(x) + x = z.
///
/// The map x -> lambda * rho'(x) + x is strictly increasing and the root lies
/// in [z - lambda, z], so Newton's method is run inside that bracket and falls
/// back to bisection whenever a step would leave it or fails to halve the
/// previous step.
inline ProxResult prox_rho(double lambda, double z, int max_iter = 100) {
  if (!(lambda >= 0.0) || !std::isfinite(z)) {
    throw InvalidArgument("prox_rho: need lambda >= 0 and finite z");
  }
  ProxResult out;
  if (lambda == 0.0) {
    out.x = z;
    out.converged = true;
    return out;
  }
  const double tol = 1e-12 * std::fmax(1.0, std::fabs(z));
  double lo = z - lambda;
  double hi = z;
  double x = z - lambda * rho_prime(z);
  double step_old = hi - lo;
  double step = step_old;
  for (int it = 1; it <= max_iter; ++it) {
    const double s = rho_prime(x);
    const double f = lambda * s + x - z;
    out.iterations = it;
    if (std::fabs(f) <= tol) {
      out.x = x;
      out.converged = true;
      return out;
    }
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double df = 1.0 + lambda * s * (1.0 - s);
    double next = x - f / df;
    if (!(next > lo && next < hi) || std::fabs(2.0 * f) > std::fabs(step_old * df)) {
      step_old = step;
      step = 0.5 * (hi - lo);
      next = lo + step;
    } else {
      step_old = step;
      step = f / df;
    }
    if (next == x) {
      // Bracket collapsed to adjacent doubles; accept if the residual is at
      // rounding level.
      out.x = x;
      out.converged = std::fabs(f) <= 4.0 * std::numeric_limits<double>::epsilon() *
                                           std::fmax(1.0, std::fabs(z));
      return out;
    }
    x = next;
  }
  out.x = x;
  return out;
}

/// Proximal point that throws NonConvergence instead of returning a flag.
inline double prox_point(double lambda, double z) {
  const ProxResult r = prox_rho(lambda, z);
  if (!r.converged) {
    throw NonConvergence("prox_rho did not converge");
  }
  return r.x;
}

/// Derivative of z -> prox_{lambda rho}(z), evaluated at the proximal point.
inline double prox_rho_deriv(double lambda, double x_prox) {
  return 1.0 / (1.0 + lambda * rho_double_prime(x_prox));
}

} // namespace hdlogit
