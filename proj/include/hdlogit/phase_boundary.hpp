#pragma once

// The boundary of the region in the (kappa, gamma) plane where the logistic
// MLE exists: kappa_b(gamma) = min_t E (Z - t V)_+^2, Z ~ N(0,1) independent of
// V with density 2 rho'(gamma v) phi(v).

#include <cmath>
#include <numbers>
#include <string>

#include "hdlogit/errors.hpp"
#include "hdlogit/gauss_quad.hpp"
#include "hdlogit/sigmoid_prox.hpp"

namespace hdlogit {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal upper tail P(Z > x).
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// E[(Z - c)_+^2] = (1 + c^2) Phi(-c) - c phi(c).
inline double positive_part_mse(double c) {
  return (1.0 + c * c) * normal_sf(c) - c * normal_pdf(c);
}

struct BoundaryPoint {
  double gamma = 0.0;
  double kappa_boundary = 0.5;
  double t_argmin = 0.0;
};

inline constexpr int kBoundaryQuadOrder = 96;

namespace detail {

/// F(t) = E_V positive_part_mse(t V), integrated against phi with weight 2 rho'(gamma v).
class BoundaryObjective {
public:
  BoundaryObjective(double gamma, const QuadratureRule& rule) : rule_(rule) {
    tilt_.resize(rule.order);
    for (int i = 0; i < rule.order; ++i) {
      tilt_[i] = rule.weights[i] * 2.0 * rho_prime(gamma * rule.nodes[i]);
    }
  }

  double operator()(double t) const {
    double acc = 0.0;
    for (int i = 0; i < rule_.order; ++i) {
      acc += tilt_[i] * positive_part_mse(t * rule_.nodes[i]);
    }
    return acc;
  }

private:
  const QuadratureRule& rule_;
  std::vector<double> tilt_;
};

/// Golden-section minimization on [a, b] of a unimodal function.
template <class F>
double golden_section(F&& f, double a, double b, double tol, double& fmin) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 200 && (b - a) > tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  fmin = f(x);
  return x;
}

} // namespace detail

/// Boundary value kappa_b(gamma): the MLE exists asymptotically iff kappa < kappa_b.
inline BoundaryPoint g_mle_inverse(double gamma, const QuadratureRule& rule) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("g_mle_inverse: gamma must be finite and >= 0");
  }
  const detail::BoundaryObjective F(gamma, rule);
  // F is convex in t. Walk downhill with doubling steps to bracket the minimum.
  const double f0 = F(0.0);
  double step = 0.25;
  double dir = 0.0;
  if (F(step) < f0) {
    dir = 1.0;
  } else if (F(-step) < f0) {
    dir = -1.0;
  }
  double lo = -step;
  double hi = step;
  if (dir != 0.0) {
    double prev = 0.0;
    double cur = dir * step;
    double fcur = F(cur);
    bool bracketed = false;
    for (int it = 0; it < 60; ++it) {
      const double next = cur + dir * step * std::pow(2.0, it + 1);
      const double fnext = F(next);
      if (fnext >= fcur) {
        lo = std::fmin(prev, next);
        hi = std::fmax(prev, next);
        bracketed = true;
        break;
      }
      prev = cur;
      cur = next;
      fcur = fnext;
    }
    if (!bracketed) {
      throw NonConvergence("g_mle_inverse: could not bracket the minimizer for gamma = " +
                           std::to_string(gamma));
    }
  }
  BoundaryPoint bp;
  bp.gamma = gamma;
  double fmin = 0.0;
  bp.t_argmin = detail::golden_section(F, lo, hi, 1e-10, fmin);
  // F(0) = 1/2 exactly; quadrature rounding can land a few ulps above it.
  bp.kappa_boundary = std::fmin(fmin, 0.5);
  return bp;
}

inline BoundaryPoint g_mle_inverse(double gamma) {
  static const QuadratureRule rule = gh_rule(kBoundaryQuadOrder);
  return g_mle_inverse(gamma, rule);
}

/// Signal strength on the boundary at dimensionality kappa, by bisection on
/// the strictly decreasing map gamma -> kappa_b(gamma).
inline double g_mle(double kappa, const QuadratureRule& rule) {
  if (!(kappa > 0.0 && kappa < 0.5)) {
    throw InvalidArgument("g_mle: kappa must lie in (0, 0.5), got " + std::to_string(kappa));
  }
  double lo = 0.0;
  double hi = 1.0;
  while (g_mle_inverse(hi, rule).kappa_boundary > kappa) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e4) {
      throw NonConvergence("g_mle: failed to bracket the boundary");
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double k = g_mle_inverse(mid, rule).kappa_boundary;
    if (k > kappa) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12 * std::fmax(1.0, hi)) {
      break;
    }
  }
  return 0.5 * (lo + hi);
}

inline double g_mle(double kappa) {
  static const QuadratureRule rule = gh_rule(kBoundaryQuadOrder);
  return g_mle(kappa, rule);
}

} // namespace hdlogit
