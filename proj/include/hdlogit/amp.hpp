#pragma once

// Approximate message passing with the stationary parameter lambda_star.
// Assumes rows of X with covariance I/n, so kappa = p/n.

#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/glm_fit.hpp"
#include "hdlogit/rng.hpp"
#include "hdlogit/sigmoid_prox.hpp"
#include "hdlogit/state_evolution.hpp"

namespace hdlogit {

/// lambda (y - rho'(prox_{lambda rho}(lambda y + s))).
inline double psi(double y, double s, double lambda) {
  if (!(lambda > 0.0)) {
    throw InvalidArgument("psi: lambda must be > 0");
  }
  return lambda * (y - rho_prime(prox_point(lambda, lambda * y + s)));
}

struct AmpState {
  Eigen::VectorXd beta_t;
  Eigen::VectorXd s_t;
  int t = 0;
  double lambda_t = 0.0;
};

struct AmpOptions {
  int max_iter = 200;
  /// Stop when max(|beta_t - beta_{t-1}|_inf, |grad l(beta_t)|_inf / n) < tol.
  double tol = 1e-9;
  double blowup = 1e8;
};

struct AmpStep {
  int t = 0;
  double grad_norm = 0.0;
  double step_norm = 0.0;
  double distance_to_mle = std::numeric_limits<double>::quiet_NaN();
};

struct AmpResult {
  AmpState state;
  bool converged = false;
  std::vector<AmpStep> trajectory;
};

/// S with Psi(y, S) consistent with beta: S = X beta - lambda (y - rho'(X beta)).
inline Eigen::VectorXd amp_consistent_s(const Dataset& data, const Eigen::VectorXd& beta,
                                        double lambda) {
  const Eigen::VectorXd eta = data.X * beta;
  Eigen::VectorXd s(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    s[i] = eta[i] - lambda * (data.y[i] - rho_prime(eta[i]));
  }
  return s;
}

/// alpha_star beta + sigma_star Z with Z standard normal.
inline Eigen::VectorXd amp_calibrated_start(const Eigen::VectorXd& beta,
                                            const SolutionTriple& triple, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd b0(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    b0[j] = triple.alpha_star * beta[j] + triple.sigma_star * normal(rng);
  }
  return b0;
}

inline AmpResult amp_run(const Dataset& data, const SolutionTriple& triple, AmpState init,
                         const AmpOptions& opts = {}, const Eigen::VectorXd* mle = nullptr) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (init.beta_t.size() != p || init.s_t.size() != n) {
    throw InvalidArgument("amp_run: initial state has the wrong dimensions");
  }
  if (mle != nullptr && mle->size() != p) {
    throw InvalidArgument("amp_run: MLE has the wrong dimension");
  }
  const double lambda = triple.lambda_star;
  if (!(lambda > 0.0)) {
    throw InvalidArgument("amp_run: lambda_star must be > 0");
  }
  const double inv_kappa = static_cast<double>(n) / static_cast<double>(p);
  AmpResult out;
  out.state = std::move(init);
  out.state.lambda_t = lambda;
  Eigen::VectorXd psi_prev(n);
  Eigen::VectorXd resid(n);
  for (int it = 0; it < opts.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      psi_prev[i] = psi(data.y[i], out.state.s_t[i], lambda);
    }
    const Eigen::VectorXd delta = inv_kappa * (data.X.transpose() * psi_prev);
    out.state.beta_t += delta;
    const Eigen::VectorXd eta = data.X * out.state.beta_t;
    out.state.s_t = eta - psi_prev;
    ++out.state.t;
    for (Eigen::Index i = 0; i < n; ++i) {
      resid[i] = rho_prime(eta[i]) - data.y[i];
    }
    AmpStep step;
    step.t = out.state.t;
    step.step_norm = delta.lpNorm<Eigen::Infinity>();
    step.grad_norm = (data.X.transpose() * resid).lpNorm<Eigen::Infinity>();
    if (mle != nullptr) {
      step.distance_to_mle = (out.state.beta_t - *mle).lpNorm<Eigen::Infinity>();
    }
    out.trajectory.push_back(step);
    if (!out.state.beta_t.allFinite() || out.state.beta_t.lpNorm<Eigen::Infinity>() > opts.blowup) {
      throw NonConvergence("AMP iterates diverged at t = " + std::to_string(out.state.t));
    }
    if (std::max(step.step_norm, step.grad_norm / static_cast<double>(n)) < opts.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

/// Starts from S0 = X beta0.
inline AmpResult amp_run(const Dataset& data, const SolutionTriple& triple,
                         const Eigen::VectorXd& beta0, const AmpOptions& opts = {},
                         const Eigen::VectorXd* mle = nullptr) {
  if (beta0.size() != data.p()) {
    throw InvalidArgument("amp_run: beta0 has the wrong dimension");
  }
  AmpState init;
  init.beta_t = beta0;
  init.s_t = data.X * beta0;
  return amp_run(data, triple, std::move(init), opts, mle);
}

inline void write_trajectory_csv(std::ostream& out, const AmpResult& result) {
  out << "iteration,grad_norm,step_norm,distance_to_mle\n";
  out.precision(17);
  for (const AmpStep& s : result.trajectory) {
    out << s.t << ',' << s.grad_norm << ',' << s.step_norm << ',';
    if (!std::isnan(s.distance_to_mle)) {
      out << s.distance_to_mle;
    }
    out << '\n';
  }
}

} // namespace hdlogit
