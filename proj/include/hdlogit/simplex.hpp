#pragma once

// Dense revised simplex for   min c'x  s.t.  A x = b,  x >= 0.
//
// The basis inverse is stored explicitly and updated with rank-one eta
// updates, with a fresh LU refactorization every few hundred pivots.
// Pricing uses devex reference weights; after a run of degenerate pivots it
// switches to Bland's rule until the objective moves again, which rules out
// cycling.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/errors.hpp"

namespace hdlogit {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

inline std::string to_string(LpStatus s) {
  switch (s) {
  case LpStatus::optimal:
    return "optimal";
  case LpStatus::infeasible:
    return "infeasible";
  case LpStatus::unbounded:
    return "unbounded";
  case LpStatus::iteration_limit:
    return "iteration_limit";
  }
  return "unknown";
}

struct SimplexOptions {
  int max_iter = 100000;
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-11;
  /// Pivots between refactorizations; 0 picks max(64, rows).
  int refactor_period = 0;
  int degenerate_run_before_bland = 50;
  /// Stop as soon as the objective drops to this value (when a lower bound is known).
  double objective_floor = -std::numeric_limits<double>::infinity();
};

class RevisedSimplex {
public:
  RevisedSimplex(Eigen::MatrixXd A, Eigen::VectorXd b, Eigen::VectorXd c,
                 SimplexOptions opts = {})
      : A_(std::move(A)), b_(std::move(b)), c_(std::move(c)), opts_(opts) {
    if (A_.rows() != b_.size() || A_.cols() != c_.size()) {
      throw InvalidArgument("RevisedSimplex: dimension mismatch");
    }
    active_ = A_.cols();
    for (Eigen::Index i = 0; i < b_.size(); ++i) {
      if (b_[i] < 0.0) {
        b_[i] = -b_[i];
        A_.row(i) *= -1.0;
      }
    }
    // Leading columns with a single nonzero are priced without touching A.
    while (singleton_prefix_ < A_.cols()) {
      const auto col = A_.col(singleton_prefix_);
      Eigen::Index row = -1;
      int nnz = 0;
      for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (col[i] != 0.0) {
          ++nnz;
          row = i;
        }
      }
      if (nnz != 1) {
        break;
      }
      single_row_.push_back(row);
      single_val_.push_back(col[row]);
      ++singleton_prefix_;
    }
  }

  Eigen::Index rows() const { return A_.rows(); }
  Eigen::Index cols() const { return A_.cols(); }

  /// Only the first k columns take part in pricing. Columns beyond k must be nonbasic.
  void set_active_columns(Eigen::Index k) {
    if (k < 0 || k > A_.cols()) {
      throw InvalidArgument("RevisedSimplex: active column count out of range");
    }
    for (int j : basis_) {
      if (j >= k && j < A_.cols()) {
        throw InvalidArgument("RevisedSimplex: cannot deactivate a basic column");
      }
    }
    active_ = k;
  }

  /// Installs a starting basis, which must be primal feasible.
  void set_basis(std::vector<int> basis) {
    if (static_cast<Eigen::Index>(basis.size()) != A_.rows()) {
      throw InvalidArgument("RevisedSimplex: basis has the wrong size");
    }
    basis_ = std::move(basis);
    refactor();
    if ((xb_.array() < -1e-9).any()) {
      throw InvalidArgument("RevisedSimplex: starting basis is not primal feasible");
    }
  }

  /// Runs the simplex method. Without a starting basis a phase-one problem
  /// with artificial variables is solved first.
  LpStatus solve() {
    iterations_ = 0;
    if (basis_.empty()) {
      const LpStatus s = phase_one();
      if (s != LpStatus::optimal) {
        return s;
      }
    }
    return iterate(c_);
  }

  double objective() const {
    double v = 0.0;
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      if (j < A_.cols()) {
        v += c_[j] * xb_[i];
      }
    }
    return v;
  }

  Eigen::VectorXd primal() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(A_.cols());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      if (j < A_.cols()) {
        x[j] = xb_[i];
      }
    }
    return x;
  }

  /// Simplex multipliers pi with pi' B = c_B' (for the rows as given, before
  /// any internal sign flips are undone).
  Eigen::VectorXd duals() const {
    Eigen::VectorXd cb(A_.rows());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      cb[i] = j < A_.cols() ? c_[j] : 0.0;
    }
    return binv_.transpose() * cb;
  }

  /// Saved basis state, for returning to an earlier point after trying an extension.
  struct Snapshot {
    std::vector<int> basis;
    Eigen::MatrixXd binv;
    Eigen::VectorXd xb;
    Eigen::VectorXd weight;
    Eigen::Index active = 0;
    int since_refactor = 0;
  };

  Snapshot snapshot() const {
    return Snapshot{basis_, binv_, xb_, weight_, active_, since_refactor_};
  }

  void restore(const Snapshot& s) {
    basis_ = s.basis;
    binv_ = s.binv;
    xb_ = s.xb;
    weight_ = s.weight;
    active_ = s.active;
    since_refactor_ = s.since_refactor;
  }

  const std::vector<int>& basis() const { return basis_; }
  int iterations() const { return iterations_; }
  const Eigen::MatrixXd& matrix() const { return A_; }

private:
  Eigen::VectorXd column(int j) const {
    if (j < A_.cols()) {
      return A_.col(j);
    }
    Eigen::VectorXd e = Eigen::VectorXd::Zero(A_.rows());
    e[j - A_.cols()] = 1.0;  // artificial
    return e;
  }

  void refactor() {
    const Eigen::Index m = A_.rows();
    Eigen::MatrixXd B(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      B.col(i) = column(basis_[static_cast<std::size_t>(i)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
    xb_ = binv_ * b_;
    since_refactor_ = 0;
  }

  LpStatus phase_one() {
    const Eigen::Index m = A_.rows();
    basis_.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      basis_[static_cast<std::size_t>(i)] = static_cast<int>(A_.cols() + i);
    }
    binv_ = Eigen::MatrixXd::Identity(m, m);
    xb_ = b_;
    since_refactor_ = 0;
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(A_.cols());
    allow_artificial_cost_ = true;
    const LpStatus s = iterate(c1);
    allow_artificial_cost_ = false;
    if (s == LpStatus::iteration_limit) {
      return s;
    }
    double infeas = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (basis_[static_cast<std::size_t>(i)] >= A_.cols()) {
        infeas += xb_[i];
      }
    }
    if (infeas > 1e-8 * std::max(1.0, b_.lpNorm<Eigen::Infinity>())) {
      return LpStatus::infeasible;
    }
    // Drive zero-level artificials out of the basis where a pivot exists.
    for (Eigen::Index r = 0; r < m; ++r) {
      if (basis_[static_cast<std::size_t>(r)] < A_.cols()) {
        continue;
      }
      const Eigen::RowVectorXd row = binv_.row(r) * A_.leftCols(active_);
      Eigen::Index q = -1;
      row.cwiseAbs().maxCoeff(&q);
      if (q >= 0 && std::fabs(row[q]) > opts_.pivot_tol &&
          std::find(basis_.begin(), basis_.end(), static_cast<int>(q)) == basis_.end()) {
        pivot(r, static_cast<int>(q), binv_ * A_.col(q));
      }
    }
    return LpStatus::optimal;
  }

  double cost_of(const Eigen::VectorXd& c, int j) const {
    if (j < A_.cols()) {
      return c[j];
    }
    return allow_artificial_cost_ ? 1.0 : 0.0;
  }

  void pivot(Eigen::Index r, int q, const Eigen::VectorXd& u) {
    const double ur = u[r];
    const double theta = xb_[r] / ur;
    xb_ -= theta * u;
    xb_[r] = theta;
    const Eigen::RowVectorXd pivot_row = binv_.row(r) / ur;
    binv_.noalias() -= u * pivot_row;
    binv_.row(r) = pivot_row;
    basis_[static_cast<std::size_t>(r)] = q;
    const int period = opts_.refactor_period > 0
                           ? opts_.refactor_period
                           : std::max(64, static_cast<int>(A_.rows()));
    if (++since_refactor_ >= period) {
      refactor();
    }
    for (Eigen::Index i = 0; i < xb_.size(); ++i) {
      if (xb_[i] < 0.0 && xb_[i] > -1e-11) {
        xb_[i] = 0.0;
      }
    }
  }

  // Reduced costs d_j = c_j - pi'a_j for all active columns.
  void price_all(const Eigen::VectorXd& c, const Eigen::VectorXd& pi, Eigen::VectorXd& d) const {
    d.resize(active_);
    for (Eigen::Index j = 0; j < std::min(singleton_prefix_, active_); ++j) {
      d[j] = c[j] - pi[single_row_[j]] * single_val_[j];
    }
    if (active_ > singleton_prefix_) {
      d.tail(active_ - singleton_prefix_).noalias() =
          c.segment(singleton_prefix_, active_ - singleton_prefix_) -
          A_.middleCols(singleton_prefix_, active_ - singleton_prefix_).transpose() * pi;
    }
  }

  // Row r of B^{-1} A over the active columns.
  void pivot_row(const Eigen::VectorXd& rho, Eigen::VectorXd& alpha) const {
    alpha.resize(active_);
    for (Eigen::Index j = 0; j < std::min(singleton_prefix_, active_); ++j) {
      alpha[j] = rho[single_row_[j]] * single_val_[j];
    }
    if (active_ > singleton_prefix_) {
      alpha.tail(active_ - singleton_prefix_).noalias() =
          A_.middleCols(singleton_prefix_, active_ - singleton_prefix_).transpose() * rho;
    }
  }

  Eigen::VectorXd basic_costs(const Eigen::VectorXd& c) const {
    Eigen::VectorXd cb(A_.rows());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      cb[i] = cost_of(c, basis_[static_cast<std::size_t>(i)]);
    }
    return cb;
  }

  // Devex pricing with reduced costs carried along by pivot-row updates and
  // recomputed whenever the basis inverse is refactored.
  LpStatus iterate(const Eigen::VectorXd& c) {
    const Eigen::Index m = A_.rows();
    std::vector<char> in_basis(static_cast<std::size_t>(A_.cols()), 0);
    for (int j : basis_) {
      if (j < A_.cols()) {
        in_basis[static_cast<std::size_t>(j)] = 1;
      }
    }
    Eigen::VectorXd d;
    Eigen::VectorXd alpha;
    if (weight_.size() != A_.cols()) {
      weight_ = Eigen::VectorXd::Ones(A_.cols());
    }
    auto weight = weight_.head(active_);
    price_all(c, binv_.transpose() * basic_costs(c), d);
    int priced_at = since_refactor_;
    bool fresh = true;
    int degenerate_run = 0;
    while (true) {
      if (basic_costs(c).dot(xb_) <= opts_.objective_floor) {
        return LpStatus::optimal;
      }
      if (since_refactor_ < priced_at) {
        price_all(c, binv_.transpose() * basic_costs(c), d);
        fresh = true;
      }
      priced_at = since_refactor_;
      const bool bland = degenerate_run >= opts_.degenerate_run_before_bland;
      int q = -1;
      double best = 0.0;
      for (Eigen::Index j = 0; j < active_; ++j) {
        if (in_basis[static_cast<std::size_t>(j)] || d[j] >= -opts_.optimality_tol) {
          continue;
        }
        if (bland) {
          q = static_cast<int>(j);
          break;
        }
        const double score = d[j] * d[j] / weight[j];
        if (score > best) {
          best = score;
          q = static_cast<int>(j);
        }
      }
      if (q < 0) {
        if (fresh) {
          return LpStatus::optimal;
        }
        price_all(c, binv_.transpose() * basic_costs(c), d);
        fresh = true;
        continue;
      }
      if (iterations_ >= opts_.max_iter) {
        return LpStatus::iteration_limit;
      }
      ++iterations_;
      const Eigen::VectorXd u = binv_ * column(q);
      Eigen::Index r = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      double best_u = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (u[i] <= opts_.pivot_tol) {
          continue;
        }
        const double ratio = std::max(xb_[i], 0.0) / u[i];
        if (r < 0) {
          r = i;
          best_ratio = ratio;
          best_u = u[i];
          continue;
        }
        const bool tie = std::fabs(ratio - best_ratio) <= 1e-12 * std::max(1.0, best_ratio);
        if (ratio < best_ratio && !tie) {
          r = i;
          best_ratio = ratio;
          best_u = u[i];
        } else if (tie) {
          // Bland: smallest basic index; otherwise prefer the larger pivot.
          const bool take = bland ? basis_[static_cast<std::size_t>(i)] <
                                        basis_[static_cast<std::size_t>(r)]
                                  : u[i] > best_u;
          if (take) {
            r = i;
            best_ratio = std::min(ratio, best_ratio);
            best_u = u[i];
          }
        }
      }
      if (r < 0) {
        return LpStatus::unbounded;
      }
      degenerate_run = best_ratio <= 1e-14 ? degenerate_run + 1 : 0;
      const int leaving = basis_[static_cast<std::size_t>(r)];

      const double ur = u[r];
      const Eigen::VectorXd rho = binv_.row(r).transpose();
      pivot_row(rho, alpha);
      const double dq = d[q];
      const double wq = weight[q];
      for (Eigen::Index j = 0; j < active_; ++j) {
        if (alpha[j] == 0.0) {
          continue;
        }
        const double ratio = alpha[j] / ur;
        d[j] -= dq * ratio;
        weight[j] = std::max(weight[j], ratio * ratio * wq);
      }
      d[q] = 0.0;
      if (leaving < A_.cols()) {
        in_basis[static_cast<std::size_t>(leaving)] = 0;
        if (leaving < active_) {
          d[leaving] = -dq / ur;
          weight[leaving] = std::max(wq / (ur * ur), 1.0);
        }
      }
      if (weight.maxCoeff() > 1e8) {
        weight_.setOnes();
      }
      in_basis[static_cast<std::size_t>(q)] = 1;
      fresh = false;
      pivot(r, q, u);
    }
  }

  Eigen::MatrixXd A_;
  Eigen::VectorXd b_;
  Eigen::VectorXd c_;
  SimplexOptions opts_;
  Eigen::Index active_ = 0;
  std::vector<int> basis_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  Eigen::VectorXd weight_;
  int since_refactor_ = 0;
  int iterations_ = 0;
  bool allow_artificial_cost_ = false;
  Eigen::Index singleton_prefix_ = 0;
  std::vector<Eigen::Index> single_row_;
  std::vector<double> single_val_;
};

} // namespace hdlogit
