#pragma once

// Fixed point (alpha*, sigma*, lambda*) of the three-equation system that
// describes the logistic MLE when p/n -> kappa and Var(X'beta) -> gamma^2.
//
//   sigma^2   = kappa^-2 E[2 rho'(Q1) (lambda rho'(prox(Q2)))^2]
//   0         = E[rho'(Q1) Q1 lambda rho'(prox(Q2))]
//   1 - kappa = E[2 rho'(Q1) / (1 + lambda rho''(prox(Q2)))]
//
// with prox = prox_{lambda rho} and (Q1, Q2) ~ N(0, Sigma(alpha, sigma)).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "hdlogit/errors.hpp"
#include "hdlogit/gauss_quad.hpp"
#include "hdlogit/phase_boundary.hpp"
#include "hdlogit/sigmoid_prox.hpp"

namespace hdlogit {

struct SolutionTriple {
  double alpha_star = 0.0;
  double sigma_star = 0.0;
  double lambda_star = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;

  /// Multiplier of the chi-square limit of twice the log-likelihood ratio.
  double lrt_factor() const { return kappa * sigma_star * sigma_star / lambda_star; }
};

struct SolveOptions {
  int quad_order = kDefaultQuadOrder;
  int max_iter = 5000;
  double tol = 1e-9;
  /// Once steps are below tol, keep iterating until every equation's residual
  /// is below this as well.
  double residual_tol = 1e-8;
  double alpha0 = 1.0;
  double sigma0 = 1.0;
  double damping = 0.5;
  /// Skip the g_MLE pre-check (the solver may then fail to converge).
  bool skip_region_check = false;
  /// Required margin: gamma < region_margin * g_MLE(kappa).
  double region_margin = 0.999;
};

namespace detail {

/// Quadrature nodes for fixed (alpha, sigma), with the Q1 factors that do not
/// depend on lambda folded into the weights.
struct SeNodes {
  std::vector<double> q2;
  std::vector<double> w_two_rho1;  // w * 2 rho'(q1)
  std::vector<double> w_two_rho1_q1;  // w * 2 rho'(q1) q1

  SeNodes(double alpha, double sigma, double kappa, double gamma, const QuadratureRule& rule) {
    const BivariateNodes nodes = bivariate_nodes({alpha, sigma, kappa, gamma}, rule);
    q2 = nodes.q2;
    w_two_rho1.resize(nodes.size());
    w_two_rho1_q1.resize(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double r = 2.0 * rho_prime(nodes.q1[i]);
      w_two_rho1[i] = nodes.w[i] * r;
      w_two_rho1_q1[i] = nodes.w[i] * r * nodes.q1[i];
    }
  }

  /// E[2 rho'(Q1) / (1 + lambda rho''(prox(Q2)))].
  double slope_moment(double lambda) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < q2.size(); ++i) {
      const double x = prox_point(lambda, q2[i]);
      acc += w_two_rho1[i] * prox_rho_deriv(lambda, x);
    }
    return acc;
  }

  struct Moments {
    double slope = 0.0;  // E[2 rho'(Q1) / (1 + lambda rho''(prox))]
    double bias = 0.0;   // E[2 rho'(Q1) Q1 lambda rho'(prox)]
    double var = 0.0;    // E[2 rho'(Q1) (lambda rho'(prox))^2]
  };

  Moments moments(double lambda) const {
    Moments m;
    for (std::size_t i = 0; i < q2.size(); ++i) {
      const double x = prox_point(lambda, q2[i]);
      const double s = lambda * rho_prime(x);
      m.slope += w_two_rho1[i] * prox_rho_deriv(lambda, x);
      m.bias += w_two_rho1_q1[i] * s;
      m.var += w_two_rho1[i] * s * s;
    }
    return m;
  }
};

/// Root of g(lambda) = target on a bracket starting at [1e-8, 8] whose upper
/// end doubles up to 512. g must be positive at the lower end.
template <class G>
double solve_lambda_root(G&& g, double target) {
  double lo = 1e-8;
  double hi = 8.0;
  double glo = g(lo) - target;
  if (!(glo > 0.0)) {
    throw OutsideExistenceRegion("solve_lambda: no sign change at lambda = 1e-8");
  }
  double ghi = g(hi) - target;
  while (ghi > 0.0) {
    lo = hi;
    glo = ghi;
    hi *= 2.0;
    if (hi > 512.0) {
      throw OutsideExistenceRegion("solve_lambda: bracket expansion failed, reached [" +
                                   std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    ghi = g(hi) - target;
  }
  std::uintmax_t max_iter = 200;
  const auto r = boost::math::tools::toms748_solve(
      [&](double l) { return g(l) - target; }, lo, hi, glo, ghi,
      boost::math::tools::eps_tolerance<double>(50), max_iter);
  return 0.5 * (r.first + r.second);
}

} // namespace detail

/// lambda solving E[2 rho'(Q1) / (1 + lambda rho''(prox_{lambda rho}(Q2)))] = 1 - kappa.
inline double solve_lambda(double alpha, double sigma, double kappa, double gamma,
                           const QuadratureRule& rule) {
  if (!(kappa > 0.0 && kappa <= 0.5)) {
    throw InvalidArgument("solve_lambda: kappa must lie in (0, 0.5]");
  }
  const detail::SeNodes nodes(alpha, sigma, kappa, gamma, rule);
  return detail::solve_lambda_root([&](double l) { return nodes.slope_moment(l); },
                                   1.0 - kappa);
}

struct VarianceMapStep {
  double alpha_next = 0.0;
  double sigma_next = 0.0;
  double lambda_t = 0.0;
};

/// One step of the variance map: lambda_t from the slope equation, then
///   alpha_{t+1}   = alpha_t + E[2 rho'(Q1) Q1 lambda_t rho'(prox(Q2))] / (kappa gamma^2)
///   sigma_{t+1}^2 = E[2 rho'(Q1) (lambda_t rho'(prox(Q2)))^2] / kappa^2.
/// For gamma = 0 alpha stays at zero.
inline VarianceMapStep variance_map_step(double alpha_t, double sigma_t, double kappa,
                                         double gamma, const QuadratureRule& rule) {
  if (!(kappa > 0.0 && kappa <= 0.5)) {
    throw InvalidArgument("variance_map_step: kappa must lie in (0, 0.5]");
  }
  const detail::SeNodes nodes(alpha_t, sigma_t, kappa, gamma, rule);
  VarianceMapStep out;
  out.lambda_t = detail::solve_lambda_root([&](double l) { return nodes.slope_moment(l); },
                                           1.0 - kappa);
  const auto m = nodes.moments(out.lambda_t);
  out.alpha_next = gamma > 0.0 ? alpha_t + m.bias / (kappa * gamma * gamma) : 0.0;
  out.sigma_next = std::sqrt(m.var) / kappa;
  return out;
}

/// Residuals of the three equations at (alpha, sigma, lambda).
inline std::array<double, 3> system_residuals(double alpha, double sigma, double lambda,
                                              double kappa, double gamma,
                                              const QuadratureRule& rule) {
  const detail::SeNodes nodes(alpha, sigma, kappa, gamma, rule);
  const auto m = nodes.moments(lambda);
  return {sigma * sigma - m.var / (kappa * kappa), 0.5 * m.bias, (1.0 - kappa) - m.slope};
}

namespace detail {

inline void check_region(double kappa, double gamma, const SolveOptions& opts) {
  if (opts.skip_region_check || gamma == 0.0) {
    return;
  }
  const double boundary = g_mle(kappa);
  if (!(gamma < opts.region_margin * boundary)) {
    throw OutsideExistenceRegion("(kappa, gamma) = (" + std::to_string(kappa) + ", " +
                                 std::to_string(gamma) +
                                 ") is outside the MLE existence region; g_MLE(kappa) = " +
                                 std::to_string(boundary));
  }
}

} // namespace detail

/// Damped fixed-point iteration of the variance map on (alpha, sigma^2).
///
/// Damping starts at opts.damping and is relaxed to 1 after the fixed-point
/// residual shrinks on three consecutive steps; it drops back on any increase.
inline SolutionTriple solve_system(double kappa, double gamma, const SolveOptions& opts = {}) {
  if (!(kappa > 0.0 && kappa < 0.5)) {
    throw InvalidArgument("solve_system: kappa must lie in (0, 0.5), got " +
                          std::to_string(kappa));
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw InvalidArgument("solve_system: gamma must be finite and >= 0");
  }
  detail::check_region(kappa, gamma, opts);
  const QuadratureRule rule = gh_rule(opts.quad_order);

  double alpha = gamma > 0.0 ? opts.alpha0 : 0.0;
  double sigma2 = opts.sigma0 * opts.sigma0;
  double damping = opts.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  int shrinking = 0;
  int doublings = 0;
  double lambda = 0.0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const VarianceMapStep step = variance_map_step(alpha, std::sqrt(sigma2), kappa, gamma, rule);
    lambda = step.lambda_t;
    const double next_sigma2 = step.sigma_next * step.sigma_next;
    const double da = step.alpha_next - alpha;
    const double ds = step.sigma_next - std::sqrt(sigma2);
    const double res = std::max(std::fabs(da), std::fabs(ds));
    if (!std::isfinite(res)) {
      throw OutsideExistenceRegion("solve_system: variance map produced non-finite values");
    }
    if (res < opts.tol) {
      SolutionTriple out;
      out.alpha_star = step.alpha_next;
      out.sigma_star = step.sigma_next;
      out.kappa = kappa;
      out.gamma = gamma;
      out.lambda_star = solve_lambda(out.alpha_star, out.sigma_star, kappa, gamma, rule);
      const auto r = system_residuals(out.alpha_star, out.sigma_star, out.lambda_star, kappa,
                                      gamma, rule);
      out.residual_norm = std::max({std::fabs(r[0]), std::fabs(r[1]), std::fabs(r[2])});
      out.iterations = it;
      if (out.residual_norm < opts.residual_tol) {
        return out;
      }
    }
    if (next_sigma2 > 4.0 * sigma2 && sigma2 > 1.0) {
      if (++doublings >= 5) {
        throw OutsideExistenceRegion("solve_system: sigma diverges; (kappa, gamma) appears to be "
                                     "outside the existence region");
      }
    } else {
      doublings = 0;
    }
    if (res < prev_res) {
      if (++shrinking >= 3) {
        damping = 1.0;
      }
    } else {
      shrinking = 0;
      damping = opts.damping;
    }
    prev_res = res;
    alpha += damping * da;
    sigma2 += damping * (next_sigma2 - sigma2);
  }
  throw NonConvergence("solve_system: no convergence after " + std::to_string(opts.max_iter) +
                       " iterations at (kappa, gamma) = (" + std::to_string(kappa) + ", " +
                       std::to_string(gamma) + "), last lambda " + std::to_string(lambda));
}

/// The gamma = 0 system in (sigma, lambda), with tau^2 = kappa sigma^2:
///   sigma^2   = kappa^-2 E[(lambda rho'(prox(tau Z)))^2]
///   1 - kappa = E[1 / (1 + lambda rho''(prox(tau Z)))]
inline std::pair<double, double> solve_reduced(double kappa, const SolveOptions& opts = {}) {
  if (!(kappa > 0.0 && kappa < 0.5)) {
    throw InvalidArgument("solve_reduced: kappa must lie in (0, 0.5)");
  }
  const QuadratureRule rule = gh_rule(opts.quad_order);
  auto moments = [&](double tau, double lambda, double& slope, double& var) {
    slope = 0.0;
    var = 0.0;
    for (int i = 0; i < rule.order; ++i) {
      const double x = prox_point(lambda, tau * rule.nodes[i]);
      const double s = lambda * rho_prime(x);
      slope += rule.weights[i] * prox_rho_deriv(lambda, x);
      var += rule.weights[i] * s * s;
    }
  };
  auto lambda_for = [&](double tau) {
    return detail::solve_lambda_root(
        [&](double l) {
          double slope = 0.0;
          double var = 0.0;
          moments(tau, l, slope, var);
          return slope;
        },
        1.0 - kappa);
  };
  double sigma2 = opts.sigma0 * opts.sigma0;
  double damping = opts.damping;
  double prev_res = std::numeric_limits<double>::infinity();
  int shrinking = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const double tau = std::sqrt(kappa * sigma2);
    const double lambda = lambda_for(tau);
    double slope = 0.0;
    double var = 0.0;
    moments(tau, lambda, slope, var);
    const double next_sigma2 = var / (kappa * kappa);
    const double res = std::fabs(std::sqrt(next_sigma2) - std::sqrt(sigma2));
    if (!std::isfinite(res)) {
      throw OutsideExistenceRegion("solve_reduced: non-finite iterate");
    }
    if (res < opts.tol) {
      const double sigma = std::sqrt(next_sigma2);
      return {sigma, lambda_for(std::sqrt(kappa) * sigma)};
    }
    if (res < prev_res) {
      if (++shrinking >= 3) {
        damping = 1.0;
      }
    } else {
      shrinking = 0;
      damping = opts.damping;
    }
    prev_res = res;
    sigma2 += damping * (next_sigma2 - sigma2);
  }
  throw NonConvergence("solve_reduced: no convergence");
}

} // namespace hdlogit
