#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "hdlogit/glm_fit.hpp"
#include "hdlogit/state_evolution.hpp"
#include "test_support.hpp"

using namespace hdlogit;

namespace {

Dataset small_dataset(Eigen::Index n, Eigen::Index p, double gamma, std::uint64_t seed) {
  return oracle::simulated_dataset(n, p, gamma, seed);
}

// Strict separation along some of `count` evenly spaced unit directions in 2D.
bool sweep_separates(const Dataset& d, int count) {
  for (int k = 0; k < count; ++k) {
    const double a = 2.0 * std::numbers::pi * (k + 0.5) / count;
    const double b0 = std::cos(a);
    const double b1 = std::sin(a);
    bool ok = true;
    for (Eigen::Index i = 0; i < d.n() && ok; ++i) {
      const double s = (2.0 * d.y[i] - 1.0) * (d.X(i, 0) * b0 + d.X(i, 1) * b1);
      ok = s > 0.0;
    }
    if (ok) {
      return true;
    }
  }
  return false;
}

// Textbook IRLS: repeated weighted least squares through a QR solve.
struct IrlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd se;
};

IrlsFit irls(const Dataset& d) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.p());
  Eigen::VectorXd w(d.n());
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd eta = d.X * beta;
    Eigen::VectorXd z(d.n());
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
      w[i] = mu * (1.0 - mu);
      z[i] = eta[i] + (d.y[i] - mu) / w[i];
    }
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd A = sw.asDiagonal() * d.X;
    beta = A.colPivHouseholderQr().solve(sw.cwiseProduct(z));
  }
  const Eigen::MatrixXd info = d.X.transpose() * w.asDiagonal() * d.X;
  IrlsFit out;
  out.beta = beta;
  out.se = info.inverse().diagonal().cwiseSqrt();
  return out;
}

} // namespace

TEST(Likelihood, ValueAtZero) {
  const Dataset d = small_dataset(50, 5, 1.0, 1);
  EXPECT_NEAR(neg_log_likelihood(Eigen::VectorXd::Zero(5), d), 50.0 * std::log(2.0), 1e-12);
}

TEST(Likelihood, SingleObservation) {
  Dataset d(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.0));
  for (double b : {-3.0, 0.0, 0.7, 40.0}) {
    EXPECT_NEAR(neg_log_likelihood(Eigen::VectorXd::Constant(1, b), d), std::log1p(std::exp(b)) - b, 1e-12);
  }
}

TEST(Likelihood, DimensionMismatch) {
  const Dataset d = small_dataset(20, 3, 1.0, 2);
  EXPECT_THROW(neg_log_likelihood(Eigen::VectorXd::Zero(2), d), InvalidArgument);
  EXPECT_THROW(gradient(Eigen::VectorXd::Zero(4), d), InvalidArgument);
}

TEST(Gradient, MatchesCentralDifferences) {
  const Dataset d = small_dataset(50, 5, 2.0, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 3.0);
  Eigen::VectorXd b(5);
  for (int j = 0; j < 5; ++j) {
    b[j] = z(rng);
  }
  const Eigen::VectorXd g = gradient(b, d);
  const double h = 1e-6;
  for (int j = 0; j < 5; ++j) {
    Eigen::VectorXd bp = b;
    Eigen::VectorXd bm = b;
    bp[j] += h;
    bm[j] -= h;
    const double fd = (neg_log_likelihood(bp, d) - neg_log_likelihood(bm, d)) / (2 * h);
    EXPECT_NEAR(fd, g[j], 1e-5 * std::max(1.0, std::fabs(g[j])));
  }
  const Eigen::MatrixXd H = hessian(b, d);
  for (int j = 0; j < 5; ++j) {
    Eigen::VectorXd bp = b;
    Eigen::VectorXd bm = b;
    bp[j] += h;
    bm[j] -= h;
    const Eigen::VectorXd col = (gradient(bp, d) - gradient(bm, d)) / (2 * h);
    EXPECT_LT((col - H.col(j)).norm(), 1e-5 * std::max(1.0, H.col(j).norm()));
  }
}

TEST(Gradient, ClosedFormsAtZero) {
  const Dataset d = small_dataset(60, 4, 1.0, 4);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
  const Eigen::VectorXd half = Eigen::VectorXd::Constant(60, 0.5);
  EXPECT_LT((gradient(zero, d) - d.X.transpose() * (half - d.y)).norm(), 1e-13);
  EXPECT_LT((hessian(zero, d) - 0.25 * d.X.transpose() * d.X).norm(), 1e-13);
}

TEST(Hessian, SymmetricPsd) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 5.0);
  for (int r = 0; r < 20; ++r) {
    const Dataset d = small_dataset(40, 8, 2.0, 100 + r);
    Eigen::VectorXd b(8);
    for (int j = 0; j < 8; ++j) {
      b[j] = z(rng);
    }
    const Eigen::MatrixXd H = hessian(b, d);
    EXPECT_LT((H - H.transpose()).norm(), 1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff(), -1e-10);
  }
}

TEST(FitMle, SymmetricDataGivesZero) {
  // Each row is paired with its reflection (-x, y) or with a flipped label
  // (x, 1 - y); either pairing makes every score term odd in b.
  const Dataset half = small_dataset(100, 4, 1.0, 6);
  for (bool reflect : {true, false}) {
    Dataset d;
    d.X.resize(200, 4);
    d.y.resize(200);
    d.X.topRows(100) = half.X;
    d.X.bottomRows(100) = reflect ? Eigen::MatrixXd(-half.X) : half.X;
    d.y.head(100) = half.y;
    d.y.tail(100) = reflect ? half.y : Eigen::VectorXd(Eigen::VectorXd::Ones(100) - half.y);
    const FitResult fit = fit_mle(d);
    ASSERT_TRUE(fit.converged);
    EXPECT_LT(fit.beta_hat.lpNorm<Eigen::Infinity>(), 1e-10) << reflect;
  }
}

TEST(FitMle, StationaryAndBelowStart) {
  for (int r = 0; r < 5; ++r) {
    const Dataset d = small_dataset(1000, 100, std::sqrt(5.0), 200 + r);
    const FitResult fit = fit_mle(d);
    ASSERT_TRUE(fit.converged);
    EXPECT_FALSE(fit.separated);
    EXPECT_LT(fit.grad_norm, 1e-8 * d.n());
    EXPECT_LT(gradient(fit.beta_hat, d).lpNorm<Eigen::Infinity>(), 1e-8 * d.n());
    EXPECT_NEAR(fit.neg_log_likelihood, neg_log_likelihood(fit.beta_hat, d), 1e-9);
    EXPECT_LT(fit.neg_log_likelihood, d.n() * std::log(2.0));
  }
}

TEST(FitMle, MatchesTextbookIrls) {
  // Frozen fixture: 30 rows, 3 columns, fixed seed.
  const Dataset d = small_dataset(30, 3, 1.5, 7);
  FitOptions tight;
  tight.grad_tol = 1e-15;
  tight.max_iter = 200;
  const FitResult fit = fit_mle(d, tight);
  ASSERT_TRUE(fit.converged);
  const IrlsFit ref = irls(d);
  EXPECT_LT((fit.beta_hat - ref.beta).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LT((classical_se_plugin(d, fit) - ref.se).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST(FitMle, ClassicalCoverageAtSmallDimension) {
  int covered = 0;
  int total = 0;
  for (int r = 0; r < 500; ++r) {
    Eigen::VectorXd beta;
    const Dataset d = oracle::simulated_dataset(200, 5, 0.5, 1000 + r, &beta);
    const FitResult fit = fit_mle(d);
    ASSERT_TRUE(fit.converged);
    const Eigen::VectorXd se = classical_se_plugin(d, fit);
    for (int j = 0; j < 5; ++j) {
      covered += std::fabs(fit.beta_hat[j] - beta[j]) <= 1.959964 * se[j] ? 1 : 0;
      ++total;
    }
  }
  EXPECT_NEAR(static_cast<double>(covered) / total, 0.95, 0.03);
}

TEST(FitMle, RequiresMoreRowsThanColumns) {
  const Dataset d = small_dataset(5, 5, 1.0, 8);
  EXPECT_THROW(fit_mle(d), InvalidArgument);
}

TEST(Separation, TwoPointExamples) {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, -1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  EXPECT_TRUE(check_separation(Dataset(X, y)));
  y << 1.0, 1.0;
  EXPECT_FALSE(check_separation(Dataset(X, y)));
}

TEST(Separation, QuasiCompleteCountsAsNotSeparated) {
  // A zero row can only be weakly separated.
  Eigen::MatrixXd X(3, 1);
  X << 1.0, -1.0, 0.0;
  Eigen::VectorXd y(3);
  y << 1.0, 0.0, 1.0;
  const SeparationResult r = separation_lp(Dataset(X, y));
  EXPECT_FALSE(r.separated);
  EXPECT_LT(r.margin, kSeparationMargin);
}

TEST(Separation, AgreesWithDirectionSweepIn2D) {
  int separated = 0;
  for (int r = 0; r < 200; ++r) {
    // Signal strengths spread so both outcomes occur.
    const double gamma = 0.5 + 0.1 * (r % 60);
    const Dataset d = small_dataset(40, 2, gamma * 3.0, 5000 + r);
    const SeparationResult lp = separation_lp(d);
    const bool sweep = sweep_separates(d, 100000);
    EXPECT_EQ(lp.separated, sweep) << "instance " << r << " margin " << lp.margin;
    if (lp.separated) {
      ++separated;
      // The returned direction certifies the separation.
      const Eigen::VectorXd s = (2.0 * d.y.array() - 1.0).matrix().cwiseProduct(d.X * lp.direction);
      EXPECT_GT(s.minCoeff(), 0.0);
    }
  }
  EXPECT_GT(separated, 20);
  EXPECT_LT(separated, 180);
}

TEST(Separation, FitReportsSeparation) {
  Dataset d = small_dataset(40, 2, 50.0, 9);
  for (int r = 0; !check_separation(d); ++r) {
    d = small_dataset(40, 2, 50.0, 10 + r);
  }
  FitOptions opts;
  opts.check_separation = true;
  const FitResult pre = fit_mle(d, opts);
  EXPECT_TRUE(pre.separated);
  EXPECT_EQ(pre.iterations, 0);
  EXPECT_THROW(ensure_converged(pre), Separated);
  const FitResult run = fit_mle(d);
  EXPECT_TRUE(run.separated);
  EXPECT_FALSE(run.converged);
}

// Small separable samples where the gradient decays below the tolerance
// before any linear predictor reaches the runaway limit.
TEST(Separation, FitNeverConvergesOnSeparableData) {
  int separable = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Dataset d = oracle::simulated_dataset(60, 20, 0.1 * static_cast<double>(seed), 300 + seed);
    const bool sep = check_separation(d);
    const FitResult f = fit_mle(d);
    EXPECT_EQ(f.separated, sep) << seed;
    EXPECT_EQ(f.converged, !sep) << seed;
    separable += sep ? 1 : 0;
  }
  EXPECT_GE(separable, 5);
  EXPECT_LE(separable, 55);
}

TEST(Llr, EmptyDropIsZero) {
  const Dataset d = small_dataset(300, 10, 1.0, 11);
  EXPECT_EQ(llr_statistic(d, {}), 0.0);
}

TEST(Llr, NonnegativeAndNested) {
  for (int r = 0; r < 10; ++r) {
    const Dataset d = small_dataset(400, 40, 2.0, 300 + r);
    const FitResult full = fit_mle(d);
    const double one = llr_statistic(d, {3}, full);
    const double two = llr_statistic(d, {3, 30}, full);
    EXPECT_GE(one, 0.0);
    EXPECT_GE(two, one - 1e-9);
    // Agrees with a cold refit of the reduced model.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < d.p(); ++j) {
      if (j != 3) {
        keep.push_back(j);
      }
    }
    const FitResult reduced = fit_mle(d.select_columns(keep));
    EXPECT_NEAR(one, reduced.neg_log_likelihood - full.neg_log_likelihood, 1e-8);
  }
}

TEST(Llr, WilksAtFixedDimension) {
  oracle::McMean two_llr;
  for (int r = 0; r < 2000; ++r) {
    const Dataset d = small_dataset(2000, 5, 1.0, 20000 + r);
    // half_const leaves the last coordinate null.
    two_llr.add(2.0 * llr_statistic(d, {4}));
  }
  EXPECT_NEAR(two_llr.mean(), 1.0, 0.1);
}

TEST(ClassicalSe, TheoreticalValues) {
  EXPECT_NEAR(classical_se_theoretical(std::sqrt(5.0)), 2.66, 0.01);
  EXPECT_NEAR(fisher_moments(0.0).nu, 0.25, 1e-15);
  EXPECT_NEAR(classical_se_theoretical(0.0), 2.0, 1e-14);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(4);
  beta[0] = 1.0;
  const Eigen::VectorXd se = classical_se_theoretical(std::sqrt(5.0), beta);
  EXPECT_NEAR(se[1], classical_se_theoretical(std::sqrt(5.0)), 1e-14);
  const FisherMoments m = fisher_moments(std::sqrt(5.0));
  EXPECT_NEAR(se[0], std::sqrt((1.0 - m.delta / (1.0 + m.delta)) / m.nu), 1e-14);
}

TEST(ClassicalSe, DeltaAgainstMonteCarlo) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z(0.0, 1.0);
  oracle::McMean nu;
  oracle::McMean second;
  std::vector<double> a(10000000);
  std::vector<double> b(10000000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = z(rng);
    a[i] = rho_double_prime(x);
    b[i] = a[i] * x * x;
    nu.add(a[i]);
    second.add(b[i]);
  }
  // delta = E[b]/E[a] - 1; delta-method standard error of the ratio.
  const double ratio = second.mean() / nu.mean();
  oracle::McMean lin;
  for (std::size_t i = 0; i < a.size(); ++i) {
    lin.add((b[i] - ratio * a[i]) / nu.mean());
  }
  EXPECT_LT(std::fabs(ratio - 1.0 - fisher_moments(1.0).delta), 4.0 * lin.se());
}

TEST(ClassicalSe, PluginScalarCase) {
  const Eigen::Index n = 200;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = i < 120 ? 1.0 : 0.0;
  }
  const Dataset d(Eigen::MatrixXd::Ones(n, 1), y);
  const FitResult fit = fit_mle(d);
  EXPECT_NEAR(fit.beta_hat[0], std::log(120.0 / 80.0), 1e-10);
  const double expected = 1.0 / std::sqrt(n * rho_double_prime(fit.beta_hat[0]));
  EXPECT_NEAR(classical_se_plugin(d, fit)[0], expected, 1e-12);
}

TEST(ClassicalSe, PluginUnderstatesHighDimensionalSpread) {
  ExperimentConfig c = preset("table1");
  const Eigen::VectorXd beta = detail::draw_beta(c, 0);
  const Dataset d = detail::draw_dataset(c, beta, Eigen::VectorXd(), 0);
  const FitResult fit = fit_mle(d);
  ASSERT_TRUE(fit.converged);
  const Eigen::VectorXd se = classical_se_plugin(d, fit);
  double max_null = 0.0;
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    if (beta[j] == 0.0) {
      max_null = std::max(max_null, se[j]);
    }
  }
  const SolutionTriple t = solve_system(0.2, std::sqrt(5.0));
  EXPECT_LT(max_null, 4.5);
  EXPECT_LT(max_null, t.sigma_star);
}

TEST(DatasetIo, CsvAndBinaryRoundTrip) {
  const Dataset d = small_dataset(25, 4, 1.0, 14);
  std::stringstream csv;
  write_csv(csv, d);
  const Dataset c = read_csv(csv);
  EXPECT_EQ(c.X, d.X);
  EXPECT_EQ(c.y, d.y);
  std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
  write_binary(bin, d);
  EXPECT_EQ(bin.str().substr(0, 5), "HDLR1");
  const Dataset b = read_binary(bin);
  EXPECT_EQ(b.X, d.X);
  EXPECT_EQ(b.y, d.y);
}

TEST(DatasetIo, MalformedCsv) {
  std::istringstream ragged("x1,x2,y\n1,2,1\n3,0\n");
  EXPECT_THROW(read_csv(ragged), ParseError);
  std::istringstream bad_y("x1,y\n1,2\n");
  EXPECT_THROW(read_csv(bad_y), ParseError);
  std::istringstream text("x1,y\nabc,1\n");
  EXPECT_THROW(read_csv(text), ParseError);
  std::istringstream empty("");
  EXPECT_THROW(read_csv(empty), ParseError);
}
