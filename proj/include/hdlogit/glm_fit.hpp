#pragma once

// Maximum-likelihood logistic regression on dense designs.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/gauss_quad.hpp"
#include "hdlogit/sigmoid_prox.hpp"
#include "hdlogit/simplex.hpp"

namespace hdlogit {

// ---------------------------------------------------------------------------
// Likelihood, gradient, Hessian

namespace detail {

inline void check_dim(const Eigen::VectorXd& beta, const Dataset& data) {
  if (beta.size() != data.p()) {
    throw InvalidArgument("coefficient vector has length " + std::to_string(beta.size()) +
                          " but the design has " + std::to_string(data.p()) + " columns");
  }
}

inline double nll_from_eta(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    acc += rho(eta[i]) - y[i] * eta[i];
  }
  return acc;
}

} // namespace detail

/// l(b) = sum_i rho(x_i'b) - y_i x_i'b.
inline double neg_log_likelihood(const Eigen::VectorXd& beta, const Dataset& data) {
  detail::check_dim(beta, data);
  const Eigen::VectorXd eta = data.X * beta;
  return detail::nll_from_eta(eta, data.y);
}

/// X'(rho'(X b) - y).
inline Eigen::VectorXd gradient(const Eigen::VectorXd& beta, const Dataset& data) {
  detail::check_dim(beta, data);
  const Eigen::VectorXd eta = data.X * beta;
  Eigen::VectorXd r(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    r[i] = rho_prime(eta[i]) - data.y[i];
  }
  return data.X.transpose() * r;
}

/// X' diag(rho''(X b)) X.
inline Eigen::MatrixXd hessian(const Eigen::VectorXd& beta, const Dataset& data) {
  detail::check_dim(beta, data);
  const Eigen::VectorXd eta = data.X * beta;
  Eigen::VectorXd sw(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    sw[i] = std::sqrt(rho_double_prime(eta[i]));
  }
  const Eigen::MatrixXd Xw = sw.asDiagonal() * data.X;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(data.p(), data.p());
  H.selfadjointView<Eigen::Lower>().rankUpdate(Xw.transpose());
  return H.selfadjointView<Eigen::Lower>();
}

// ---------------------------------------------------------------------------
// Perfect separation

struct SeparationResult {
  bool separated = false;
  /// Optimal s of: max s  s.t.  (2 y_i - 1) x_i'b >= s,  |b|_inf <= 1.
  double margin = 0.0;
  /// A maximizing b (only meaningful when separated).
  Eigen::VectorXd direction;
  int iterations = 0;
};

inline constexpr double kSeparationMargin = 1e-8;

/// Separation LP solved through its dual
///   min sum_k (u_k + w_k)  s.t.  sum_i lambda_i = 1,
///                                sum_i lambda_i a_i - u + w = 0,  lambda, u, w >= 0,
/// with a_i = (2 y_i - 1) x_i, whose optimum equals the maximal margin. Rows can
/// be added incrementally: the current basis stays feasible, so the solve
/// continues from where it stopped. The margin can only shrink as rows are added.
class SeparationProbe {
public:
  /// `order` lists the rows of `data` in the order they will be added.
  SeparationProbe(const Dataset& data, const std::vector<Eigen::Index>& order)
      : p_(data.p()), total_(static_cast<Eigen::Index>(order.size())) {
    if (total_ == 0) {
      throw InvalidArgument("SeparationProbe: no rows");
    }
    const Eigen::Index m = p_ + 1;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, 2 * p_ + total_);
    for (Eigen::Index k = 0; k < p_; ++k) {
      A(k + 1, k) = -1.0;      // u_k
      A(k + 1, p_ + k) = 1.0;  // w_k
    }
    for (Eigen::Index t = 0; t < total_; ++t) {
      const Eigen::Index i = order[static_cast<std::size_t>(t)];
      const double sign = data.y[i] > 0.5 ? 1.0 : -1.0;
      A(0, 2 * p_ + t) = 1.0;
      A.block(1, 2 * p_ + t, p_, 1) = sign * data.X.row(i).transpose();
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    b[0] = 1.0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * p_ + total_);
    c.head(2 * p_).setOnes();
    SimplexOptions opts;
    opts.objective_floor = kSeparationMargin;
    lp_.emplace(std::move(A), std::move(b), std::move(c), opts);

    // lambda of the first row at 1; u_k or w_k absorbs each coordinate.
    std::vector<int> basis(static_cast<std::size_t>(m));
    basis[0] = static_cast<int>(2 * p_);
    for (Eigen::Index k = 0; k < p_; ++k) {
      const double a = lp_->matrix()(k + 1, 2 * p_);
      basis[static_cast<std::size_t>(k + 1)] = static_cast<int>(a >= 0.0 ? k : p_ + k);
    }
    lp_->set_active_columns(2 * p_ + 1);
    lp_->set_basis(std::move(basis));
    rows_ = 1;
  }

  Eigen::Index rows_used() const { return rows_; }
  Eigen::Index total_rows() const { return total_; }

  /// Solves with the first `m` rows; `m` must not decrease between calls.
  SeparationResult solve_with(Eigen::Index m) {
    if (m < rows_ || m > total_) {
      throw InvalidArgument("SeparationProbe: row count must be nondecreasing and <= total");
    }
    rows_ = m;
    lp_->set_active_columns(2 * p_ + m);
    const LpStatus status = lp_->solve();
    iterations_ += lp_->iterations();
    if (status != LpStatus::optimal) {
      throw NonConvergence("separation LP ended with status " + to_string(status));
    }
    SeparationResult out;
    out.margin = std::max(0.0, lp_->objective());
    out.separated = out.margin > kSeparationMargin;
    const Eigen::VectorXd pi = lp_->duals();
    out.direction = -pi.tail(p_);
    out.iterations = iterations_;
    return out;
  }

  /// Largest m in [lo, hi] such that the first m rows are separable (separability
  /// is monotone in m); returns lo - 1 if there is none. Rows are added in
  /// chunks, and the chunk that breaks separability is bisected from a saved
  /// basis.
  Eigen::Index last_separable(Eigen::Index lo, Eigen::Index hi, Eigen::Index chunk = 256) {
    lo = std::max(lo, rows_);
    hi = std::min(hi, total_);
    if (lo > hi || !solve_with(lo).separated) {
      return lo - 1;
    }
    Eigen::Index good = lo;
    Eigen::Index bad = hi + 1;
    RevisedSimplex::Snapshot saved = lp_->snapshot();
    while (good < hi) {
      const Eigen::Index next = std::min(hi, good + chunk);
      if (solve_with(next).separated) {
        good = next;
        saved = lp_->snapshot();
      } else {
        bad = next;
        break;
      }
    }
    while (bad - good > 1) {
      lp_->restore(saved);
      rows_ = good;
      const Eigen::Index mid = good + (bad - good) / 2;
      if (solve_with(mid).separated) {
        good = mid;
        saved = lp_->snapshot();
      } else {
        bad = mid;
      }
    }
    lp_->restore(saved);
    rows_ = good;
    return good;
  }

private:
  Eigen::Index p_ = 0;
  Eigen::Index total_ = 0;
  Eigen::Index rows_ = 0;
  int iterations_ = 0;
  std::optional<RevisedSimplex> lp_;
};

/// Full separation LP on all rows.
inline SeparationResult separation_lp(const Dataset& data) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.n()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  SeparationProbe probe(data, order);
  return probe.solve_with(data.n());
}

/// True iff some b has x_i'b > 0 whenever y_i = 1 and x_i'b < 0 whenever y_i = 0.
inline bool check_separation(const Dataset& data) { return separation_lp(data).separated; }

// ---------------------------------------------------------------------------
// Newton fit

struct FitOptions {
  int max_iter = 100;
  /// Converged when |grad|_inf < grad_tol * n.
  double grad_tol = 1e-10;
  bool check_separation = false;
  /// Keep the Cholesky factor for the next step while the gradient is
  /// shrinking at least fourfold per step (chord steps in the local regime).
  bool reuse_factorization = true;
  double jitter = 1e-10;
  /// A linear predictor beyond this magnitude means the iterates are running
  /// off to infinity; the separation LP then decides what happened.
  double eta_limit = 500.0;
};

struct FitResult {
  Eigen::VectorXd beta_hat;
  bool converged = false;
  bool separated = false;
  double neg_log_likelihood = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  int hessian_evaluations = 0;
};

/// Throws Separated or NonConvergence for a failed fit.
inline void ensure_converged(const FitResult& fit) {
  if (fit.separated) {
    throw Separated("the data are perfectly separable; the MLE does not exist");
  }
  if (!fit.converged) {
    throw NonConvergence("Newton iteration did not converge; final |grad|_inf = " +
                         std::to_string(fit.grad_norm));
  }
}

namespace detail {

class NewtonWorkspace {
public:
  explicit NewtonWorkspace(const Dataset& data) : data_(data) {}

  void eval(const Eigen::VectorXd& beta) {
    eta_.noalias() = data_.X * beta;
  }

  double nll() const { return nll_from_eta(eta_, data_.y); }

  Eigen::VectorXd grad() {
    resid_.resize(eta_.size());
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      resid_[i] = rho_prime(eta_[i]) - data_.y[i];
    }
    return data_.X.transpose() * resid_;
  }

  bool factor(double jitter) {
    sw_.resize(eta_.size());
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      sw_[i] = std::sqrt(rho_double_prime(eta_[i]));
    }
    xw_.noalias() = sw_.asDiagonal() * data_.X;
    H_.setZero(data_.p(), data_.p());
    H_.selfadjointView<Eigen::Lower>().rankUpdate(xw_.transpose());
    llt_.compute(H_);
    double shift = jitter * std::max(1.0, H_.diagonal().maxCoeff());
    for (int attempt = 0; llt_.info() != Eigen::Success && attempt < 12; ++attempt) {
      Eigen::MatrixXd Hj = H_;
      Hj.diagonal().array() += shift;
      llt_.compute(Hj);
      shift *= 10.0;
    }
    return llt_.info() == Eigen::Success;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& g) const { return llt_.solve(g); }

  double max_abs_eta() const { return eta_.cwiseAbs().maxCoeff(); }

  bool separates() const {
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      if (!(data_.y[i] == 1.0 ? eta_[i] > 0.0 : eta_[i] < 0.0)) {
        return false;
      }
    }
    return true;
  }

private:
  const Dataset& data_;
  Eigen::VectorXd eta_;
  Eigen::VectorXd resid_;
  Eigen::VectorXd sw_;
  Eigen::MatrixXd xw_;
  Eigen::MatrixXd H_;
  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt_;
};

} // namespace detail

/// Damped Newton from `start`: halve the step until l does not increase.
inline FitResult fit_mle(const Dataset& data, const FitOptions& opts,
                         const Eigen::VectorXd& start) {
  detail::check_dim(start, data);
  if (data.n() <= data.p()) {
    throw InvalidArgument("fit_mle: need n > p (n = " + std::to_string(data.n()) +
                          ", p = " + std::to_string(data.p()) + ")");
  }
  FitResult out;
  if (opts.check_separation && check_separation(data)) {
    out.beta_hat = start;
    out.separated = true;
    out.grad_norm = std::numeric_limits<double>::infinity();
    return out;
  }
  const double tol = opts.grad_tol * static_cast<double>(data.n());
  detail::NewtonWorkspace ws(data);
  Eigen::VectorXd beta = start;
  ws.eval(beta);
  double f = ws.nll();
  Eigen::VectorXd g = ws.grad();
  double gnorm = g.lpNorm<Eigen::Infinity>();
  bool have_factor = false;
  bool reuse = false;
  for (int it = 0;; ++it) {
    out.iterations = it;
    if (gnorm < tol) {
      // On separable data the gradient decays exponentially along the
      // separating direction and can pass the test; a fit that classifies
      // every row correctly is itself a strict separator.
      out.separated = ws.separates();
      out.converged = !out.separated;
      break;
    }
    if (it >= opts.max_iter) {
      break;
    }
    if (!have_factor || !reuse) {
      if (!ws.factor(opts.jitter)) {
        break;
      }
      have_factor = true;
      ++out.hessian_evaluations;
    }
    const Eigen::VectorXd step = -ws.solve(g);
    double t = 1.0;
    Eigen::VectorXd trial = beta + step;
    ws.eval(trial);
    double ft = ws.nll();
    const double slack = 1e-13 * (1.0 + std::fabs(f));
    int halvings = 0;
    while (!(ft <= f + slack) && halvings < 40) {
      t *= 0.5;
      ++halvings;
      trial = beta + t * step;
      ws.eval(trial);
      ft = ws.nll();
    }
    if (!(ft <= f + slack)) {
      ws.eval(beta);
      break;
    }
    beta = std::move(trial);
    f = ft;
    const Eigen::VectorXd gnew = ws.grad();
    const double gnorm_new = gnew.lpNorm<Eigen::Infinity>();
    reuse = opts.reuse_factorization && halvings == 0 && gnorm_new < 0.25 * gnorm;
    g = gnew;
    gnorm = gnorm_new;
    if (ws.max_abs_eta() > opts.eta_limit) {
      out.separated = check_separation(data);
      break;
    }
  }
  out.beta_hat = std::move(beta);
  out.neg_log_likelihood = f;
  out.grad_norm = gnorm;
  if (out.separated) {
    out.converged = false;
  }
  return out;
}

inline FitResult fit_mle(const Dataset& data, const FitOptions& opts = {}) {
  return fit_mle(data, opts, Eigen::VectorXd::Zero(data.p()));
}

// ---------------------------------------------------------------------------
// Likelihood ratio

/// Lambda = min_{b: b_drop = 0} l(b) - min_b l(b), given a converged full fit.
/// The constrained fit is warm-started from the full MLE with the dropped
/// coordinates removed.
inline double llr_statistic(const Dataset& data, const std::vector<Eigen::Index>& drop,
                            const FitResult& full, const FitOptions& opts = {}) {
  ensure_converged(full);
  if (drop.empty()) {
    return 0.0;
  }
  std::vector<char> dropped(static_cast<std::size_t>(data.p()), 0);
  for (Eigen::Index j : drop) {
    if (j < 0 || j >= data.p()) {
      throw InvalidArgument("llr_statistic: coordinate " + std::to_string(j) + " out of range");
    }
    dropped[static_cast<std::size_t>(j)] = 1;
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    if (!dropped[static_cast<std::size_t>(j)]) {
      keep.push_back(j);
    }
  }
  const Dataset reduced = data.select_columns(keep);
  Eigen::VectorXd start(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    start[static_cast<Eigen::Index>(k)] = full.beta_hat[keep[k]];
  }
  FitOptions copts = opts;
  copts.check_separation = false;
  const FitResult constrained = fit_mle(reduced, copts, start);
  ensure_converged(constrained);
  return std::max(0.0, constrained.neg_log_likelihood - full.neg_log_likelihood);
}

inline double llr_statistic(const Dataset& data, const std::vector<Eigen::Index>& drop,
                            const FitOptions& opts = {}) {
  if (drop.empty()) {
    return 0.0;
  }
  const FitResult full = fit_mle(data, opts);
  return llr_statistic(data, drop, full, opts);
}

// ---------------------------------------------------------------------------
// Classical (Fisher information) baselines

struct FisherMoments {
  double nu = 0.25;    // E rho''(gamma Z)
  double delta = 0.0;  // (E[rho''(gamma Z) Z^2] - nu) / nu
};

inline FisherMoments fisher_moments(double gamma, const QuadratureRule& rule) {
  if (!(gamma >= 0.0)) {
    throw InvalidArgument("fisher_moments: gamma must be >= 0");
  }
  FisherMoments m;
  m.nu = rule.expect([&](double z) { return rho_double_prime(gamma * z); });
  const double second = rule.expect([&](double z) { return rho_double_prime(gamma * z) * z * z; });
  m.delta = (second - m.nu) / m.nu;
  return m;
}

inline FisherMoments fisher_moments(double gamma) {
  static const QuadratureRule rule = gh_rule(96);
  return fisher_moments(gamma, rule);
}

/// Classical standard deviation of a null MLE coordinate: nu^{-1/2}.
inline double classical_se_theoretical(double gamma) {
  return 1.0 / std::sqrt(fisher_moments(gamma).nu);
}

/// Per-coordinate classical standard deviations from the inverse Fisher
/// information nu^{-1} (I - delta/(1+delta) u u'), u = beta / |beta|.
inline Eigen::VectorXd classical_se_theoretical(double gamma, const Eigen::VectorXd& beta) {
  const FisherMoments m = fisher_moments(gamma);
  const double norm2 = beta.squaredNorm();
  Eigen::VectorXd se(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double share = norm2 > 0.0 ? beta[j] * beta[j] / norm2 : 0.0;
    se[j] = std::sqrt((1.0 - m.delta / (1.0 + m.delta) * share) / m.nu);
  }
  return se;
}

/// Software-package standard errors: sqrt(diag((X' D X)^{-1})) at the MLE.
inline Eigen::VectorXd classical_se_plugin(const Dataset& data, const FitResult& fit) {
  ensure_converged(fit);
  const Eigen::MatrixXd H = hessian(fit.beta_hat, data);
  const Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("classical_se_plugin: Hessian is singular");
  }
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(data.p(), data.p()));
  return inv.diagonal().cwiseSqrt();
}

} // namespace hdlogit
