#pragma once

// Corrected inference for a fitted MLE given a solution triple: debiasing,
// corrected standard errors, rescaled LRT p-values, debiased predictions.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/glm_fit.hpp"
#include "hdlogit/sigmoid_prox.hpp"
#include "hdlogit/state_evolution.hpp"

namespace hdlogit {

// ---------------------------------------------------------------------------
// Chi-square survival

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a):
/// power series for x < a + 1, Lentz continued fraction otherwise.
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) {
    throw InvalidArgument("gamma_q: need a > 0 and x >= 0");
  }
  if (x == 0.0) {
    return 1.0;
  }
  if (std::isinf(x)) {
    return 0.0;
  }
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  constexpr double eps = 1e-16;
  constexpr int max_terms = 10000;
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int k = 0; k < max_terms; ++k) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * eps) {
        break;
      }
    }
    return std::max(0.0, 1.0 - sum * std::exp(log_prefactor));
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k <= max_terms; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) {
      d = tiny;
    }
    c = b + an / c;
    if (std::fabs(c) < tiny) {
      c = tiny;
    }
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < eps) {
      break;
    }
  }
  return std::exp(log_prefactor) * h;
}

/// P(chi2_df > x).
inline double chi_square_sf(double x, int df) {
  if (df < 1) {
    throw InvalidArgument("chi_square_sf: degrees of freedom must be >= 1");
  }
  if (!(x >= 0.0)) {
    throw InvalidArgument("chi_square_sf: x must be >= 0");
  }
  return gamma_q(0.5 * df, 0.5 * x);
}

/// P-value of twice the log-likelihood ratio under factor * chi2_df.
inline double lrt_pvalue(double two_llr, double factor, int df = 1) {
  if (df < 1) {
    throw InvalidArgument("lrt_pvalue: degrees of freedom must be >= 1");
  }
  if (!(two_llr >= 0.0)) {
    throw InvalidArgument("lrt_pvalue: statistic must be >= 0");
  }
  if (!(factor >= 0.0)) {
    throw InvalidArgument("lrt_pvalue: factor must be >= 0");
  }
  if (two_llr == 0.0) {
    return 1.0;
  }
  if (factor == 0.0) {
    return 0.0;
  }
  return chi_square_sf(two_llr / factor, df);
}

// ---------------------------------------------------------------------------
// Elementwise corrections

inline Eigen::VectorXd debias(const Eigen::VectorXd& beta_hat, double alpha) {
  if (!(alpha > 0.0)) {
    throw InvalidArgument("debias: alpha must be > 0");
  }
  return beta_hat / alpha;
}

/// sigma / sqrt(n v): standard deviation of a null coordinate when the
/// design columns have variance v.
inline double corrected_se(const SolutionTriple& triple, Eigen::Index n, double column_variance) {
  if (!(column_variance > 0.0)) {
    throw InvalidArgument("corrected_se: column variance must be > 0");
  }
  if (n < 1) {
    throw InvalidArgument("corrected_se: n must be >= 1");
  }
  return triple.sigma_star / std::sqrt(static_cast<double>(n) * column_variance);
}

/// rho'(x'b / alpha).
inline double debiased_predict(const Eigen::VectorXd& x_new, const Eigen::VectorXd& beta_hat,
                               double alpha) {
  if (x_new.size() != beta_hat.size()) {
    throw InvalidArgument("debiased_predict: dimension mismatch");
  }
  if (!(alpha > 0.0)) {
    throw InvalidArgument("debiased_predict: alpha must be > 0");
  }
  return rho_prime(x_new.dot(beta_hat) / alpha);
}

/// Per-column variance with denominator n.
inline Eigen::VectorXd column_variances(const Eigen::MatrixXd& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  return ((X.rowwise() - mean).array().square().colwise().sum() /
          static_cast<double>(X.rows()))
      .transpose();
}

// ---------------------------------------------------------------------------
// Full report

enum class TripleSource { theoretical, probe_frontier };

inline std::string to_string(TripleSource s) {
  return s == TripleSource::theoretical ? "theoretical" : "probe_frontier";
}

struct AdjustOptions {
  /// Use v = 1/n for every column instead of the sample variances.
  bool native_scaling = false;
  /// Coordinates that get a likelihood-ratio test; empty means all.
  std::vector<Eigen::Index> lrt_coordinates;
  bool run_lrt = true;
  FitOptions fit;
};

struct AdjustedInference {
  Eigen::VectorXd beta_hat;
  Eigen::VectorXd beta_debiased;
  Eigen::VectorXd se_classical;
  /// Valid for null coordinates; for non-null coordinates it is a heuristic.
  Eigen::VectorXd se_corrected;
  std::vector<Eigen::Index> tested;
  std::vector<double> two_llr;
  std::vector<double> pvalues_classical;
  std::vector<double> pvalues;
  double lrt_factor = 1.0;
  SolutionTriple triple_used;
  TripleSource source = TripleSource::theoretical;
};

inline AdjustedInference adjust(const Dataset& data, const FitResult& fit,
                                const SolutionTriple& triple, TripleSource source,
                                const AdjustOptions& opts = {}) {
  ensure_converged(fit);
  AdjustedInference out;
  out.triple_used = triple;
  out.source = source;
  out.lrt_factor = triple.lrt_factor();
  out.beta_hat = fit.beta_hat;
  out.beta_debiased = debias(fit.beta_hat, triple.alpha_star);
  out.se_classical = classical_se_plugin(data, fit);
  const Eigen::Index n = data.n();
  const Eigen::VectorXd v = opts.native_scaling
                                ? Eigen::VectorXd::Constant(data.p(), 1.0 / static_cast<double>(n))
                                : column_variances(data.X);
  out.se_corrected.resize(data.p());
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    out.se_corrected[j] = corrected_se(triple, n, v[j]);
  }
  if (opts.run_lrt) {
    if (opts.lrt_coordinates.empty()) {
      for (Eigen::Index j = 0; j < data.p(); ++j) {
        out.tested.push_back(j);
      }
    } else {
      out.tested = opts.lrt_coordinates;
    }
    for (Eigen::Index j : out.tested) {
      const double t = 2.0 * llr_statistic(data, {j}, fit, opts.fit);
      out.two_llr.push_back(t);
      out.pvalues_classical.push_back(lrt_pvalue(t, 1.0, 1));
      out.pvalues.push_back(lrt_pvalue(t, out.lrt_factor, 1));
    }
  }
  return out;
}

} // namespace hdlogit
