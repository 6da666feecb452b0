#pragma once

// Gauss-Hermite expectations against the standard normal, in one and two
// dimensions.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/errors.hpp"

namespace hdlogit {

/// Nodes and weights such that sum_i w_i f(x_i) approximates E f(Z), Z ~ N(0,1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int order = 0;

  template <class F>
  double expect(F&& f) const {
    double acc = 0.0;
    for (int i = 0; i < order; ++i) {
      acc += weights[i] * f(nodes[i]);
    }
    return acc;
  }
};

/// Per-dimension order; the fixed-point integrands agree with order 128 to 1e-8.
inline constexpr int kDefaultQuadOrder = 64;

/// Probabilists' Gauss-Hermite rule.
///
/// Nodes come from the Golub-Welsch eigenproblem and are polished with Newton
/// steps on the orthonormal Hermite recurrence; weights are the Christoffel
/// numbers 1 / sum_k h_k(x)^2, renormalized to sum to one.
inline QuadratureRule gh_rule(int order) {
  if (order < 2 || order > 256) {
    throw InvalidArgument("gh_rule: order must be in [2, 256], got " + std::to_string(order));
  }
  const int n = order;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  for (int k = 1; k < n; ++k) {
    sub[k - 1] = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  // Orthonormal probabilists' Hermite: h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1).
  // Returns h_n(x), h_n'(x) and sum_{k<n} h_k(x)^2.
  auto eval = [n](double x, double& hn, double& dhn, double& sumsq) {
    double hkm1 = 0.0;
    double hk = 1.0;
    double dkm1 = 0.0;
    double dk = 0.0;
    sumsq = 0.0;
    for (int k = 0; k < n; ++k) {
      sumsq += hk * hk;
      const double a = 1.0 / std::sqrt(static_cast<double>(k + 1));
      const double b = std::sqrt(static_cast<double>(k));
      const double hnext = a * (x * hk - b * hkm1);
      const double dnext = a * (hk + x * dk - b * dkm1);
      hkm1 = hk;
      hk = hnext;
      dkm1 = dk;
      dk = dnext;
    }
    hn = hk;
    dhn = dk;
  };

  QuadratureRule rule;
  rule.order = n;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = es.eigenvalues()[i];
    double hn = 0.0;
    double dhn = 0.0;
    double sumsq = 0.0;
    for (int it = 0; it < 3; ++it) {
      eval(x, hn, dhn, sumsq);
      if (dhn == 0.0) {
        break;
      }
      x -= hn / dhn;
    }
    eval(x, hn, dhn, sumsq);
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / sumsq;
    total += rule.weights[i];
  }
  // Symmetrize: the exact rule is symmetric about zero.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = w;
    rule.weights[j] = w;
  }
  if (n % 2 == 1) {
    rule.nodes[n / 2] = 0.0;
  }
  total = 0.0;
  for (double w : rule.weights) {
    total += w;
  }
  for (double& w : rule.weights) {
    w /= total;
  }
  return rule;
}

/// Parameters of the bivariate normal (Q1, Q2) with covariance
/// [[g^2, -a g^2], [-a g^2, a^2 g^2 + k s^2]].
struct BivariateGaussianSpec {
  double alpha = 0.0;
  double sigma = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;

  Eigen::Matrix2d covariance() const {
    const double g2 = gamma * gamma;
    Eigen::Matrix2d c;
    c << g2, -alpha * g2, -alpha * g2, alpha * alpha * g2 + kappa * sigma * sigma;
    return c;
  }

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(sigma) || !std::isfinite(kappa) ||
        !std::isfinite(gamma)) {
      throw InvalidArgument("BivariateGaussianSpec: non-finite parameter");
    }
    if (sigma < 0.0 || gamma < 0.0 || kappa < 0.0) {
      throw InvalidArgument("BivariateGaussianSpec: covariance is not positive semidefinite");
    }
  }
};

/// A bivariate rule in whitened coordinates, flattened into (q1, q2, w) triples.
/// Degenerate directions collapse to a one-dimensional rule.
struct BivariateNodes {
  std::vector<double> q1;
  std::vector<double> q2;
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
};

inline BivariateNodes bivariate_nodes(const BivariateGaussianSpec& spec,
                                      const QuadratureRule& rule) {
  spec.validate();
  // Lower Cholesky factor: Q1 = g Z1, Q2 = -a g Z1 + sqrt(k) s Z2.
  const double l11 = spec.gamma;
  const double l21 = -spec.alpha * spec.gamma;
  const double l22 = std::sqrt(spec.kappa) * spec.sigma;
  BivariateNodes out;
  const int m = rule.order;
  if (l11 == 0.0 || l22 == 0.0) {
    out.q1.resize(m);
    out.q2.resize(m);
    out.w = rule.weights;
    for (int i = 0; i < m; ++i) {
      const double z = rule.nodes[i];
      if (l11 == 0.0) {
        out.q1[i] = 0.0;
        out.q2[i] = l22 * z;
      } else {
        out.q1[i] = l11 * z;
        out.q2[i] = l21 * z;
      }
    }
    return out;
  }
  const std::size_t total = static_cast<std::size_t>(m) * m;
  out.q1.reserve(total);
  out.q2.reserve(total);
  out.w.reserve(total);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      out.q1.push_back(l11 * rule.nodes[i]);
      out.q2.push_back(l21 * rule.nodes[i] + l22 * rule.nodes[j]);
      out.w.push_back(rule.weights[i] * rule.weights[j]);
    }
  }
  return out;
}

/// E f(Q1, Q2) by tensorized Gauss-Hermite quadrature.
template <class F>
double expect_bivariate(F&& f, const BivariateGaussianSpec& spec, const QuadratureRule& rule) {
  const BivariateNodes nodes = bivariate_nodes(spec, rule);
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    acc += nodes.w[i] * f(nodes.q1[i], nodes.q2[i]);
  }
  return acc;
}

} // namespace hdlogit
