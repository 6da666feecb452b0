#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "hdlogit/adjusted_inference.hpp"
#include "hdlogit/sim_harness.hpp"
#include "test_support.hpp"

using namespace hdlogit;

namespace {

const double kGamma = std::sqrt(5.0);

double median(std::vector<double> x) {
  const auto mid = x.begin() + static_cast<std::ptrdiff_t>(x.size() / 2);
  std::nth_element(x.begin(), mid, x.end());
  return *mid;
}

} // namespace

TEST(GammaQ, AgreesWithBoost) {
  for (double a : {0.5, 1.0, 1.5, 2.5, 5.0, 10.0, 50.0}) {
    for (double x : {1e-6, 0.01, 0.3, 1.0, 2.0, 5.0, 10.0, 30.0, 80.0}) {
      const double ref = boost::math::gamma_q(a, x);
      EXPECT_NEAR(gamma_q(a, x), ref, 1e-12 * ref + 1e-300) << a << ' ' << x;
    }
  }
  EXPECT_EQ(gamma_q(1.0, 0.0), 1.0);
  EXPECT_THROW(gamma_q(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(gamma_q(1.0, -1.0), InvalidArgument);
}

TEST(ChiSquareSf, OneDegreeIdentity) {
  for (double x = 0.0; x < 60.0; x += 0.37) {
    EXPECT_NEAR(chi_square_sf(x, 1), std::erfc(std::sqrt(x / 2.0)), 1e-10) << x;
  }
}

TEST(ChiSquareSf, StrictlyDecreasing) {
  double prev = 1.0 + 1e-12;
  for (double x = 0.0; x < 40.0; x += 0.25) {
    const double s = chi_square_sf(x, 3);
    EXPECT_LT(s, prev);
    prev = s;
  }
  EXPECT_THROW(chi_square_sf(1.0, 0), InvalidArgument);
}

TEST(LrtPvalue, Values) {
  EXPECT_EQ(lrt_pvalue(0.0, 1.5), 1.0);
  EXPECT_NEAR(lrt_pvalue(3.8415, 1.0, 1), 0.05, 1e-4);
  EXPECT_NEAR(lrt_pvalue(2.0 * 3.8415, 2.0, 1), 0.05, 1e-4);
  EXPECT_GT(lrt_pvalue(3.8415, 1.2, 1), 0.05);
  EXPECT_THROW(lrt_pvalue(1.0, 1.0, 0), InvalidArgument);
  EXPECT_THROW(lrt_pvalue(-1.0, 1.0, 1), InvalidArgument);
}

TEST(LrtFactor, ExceedsOneForPositiveKappa) {
  for (double kappa : {0.01, 0.1, 0.2, 0.3}) {
    for (double gamma : {0.0, 1.0, 2.0}) {
      EXPECT_GT(solve_system(kappa, gamma).lrt_factor(), 1.0) << kappa << ' ' << gamma;
    }
  }
}

TEST(Debias, Values) {
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(5, -2.0, 2.0);
  EXPECT_EQ(debias(b, 1.0), b);
  const Eigen::VectorXd est = debias(b, 1.511);
  const Eigen::VectorXd theo = debias(b, 1.499);
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b[j] != 0.0) {
      EXPECT_LT(std::fabs(est[j] / theo[j] - 1.0), 0.01);
    }
  }
  EXPECT_THROW(debias(b, 0.0), InvalidArgument);
  EXPECT_THROW(debias(b, -1.0), InvalidArgument);
}

TEST(Debias, NullCoordinatesAreCentered) {
  const SolutionTriple t = solve_system(0.2, kGamma);
  oracle::McMean nulls;
  for (int r = 0; r < 4; ++r) {
    Eigen::VectorXd beta;
    const Dataset d = oracle::simulated_dataset(4000, 800, kGamma, 900 + r, &beta);
    const Eigen::VectorXd db = debias(fit_mle(d).beta_hat, t.alpha_star);
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      if (beta[j] == 0.0) {
        nulls.add(db[j]);
      }
    }
  }
  EXPECT_LT(std::fabs(nulls.mean()), 3.0 * nulls.se());
}

TEST(CorrectedSe, Scaling) {
  const SolutionTriple t = solve_system(0.2, kGamma);
  EXPECT_NEAR(corrected_se(t, 4000, 1.0 / 4000.0), t.sigma_star, 1e-12);
  EXPECT_NEAR(corrected_se(t, 4000, 1.0 / 4000.0), 4.744, 5e-3);
  EXPECT_NEAR(corrected_se(t, 4000, 1.0), 4.744 / std::sqrt(4000.0), 5e-3 / std::sqrt(4000.0));
  EXPECT_NEAR(corrected_se(t, 4000, 1.0 / 4000.0) / classical_se_theoretical(kGamma), 1.78, 0.01);
  EXPECT_THROW(corrected_se(t, 4000, 0.0), InvalidArgument);
}

TEST(DebiasedPredict, Values) {
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(3, 2.0);
  EXPECT_EQ(debiased_predict(Eigen::VectorXd::Zero(3), b, 1.5), 0.5);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(3, 0.1, 0.5);
  EXPECT_EQ(debiased_predict(x, b, 1.0), rho_prime(x.dot(b)));
  const double p = debiased_predict(x, b, 1.5);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
  EXPECT_THROW(debiased_predict(Eigen::VectorXd::Zero(2), b, 1.0), InvalidArgument);
  EXPECT_THROW(debiased_predict(x, b, 0.0), InvalidArgument);
}

// Raw predictions pile up near 0 and 1; debiased ones are centered on the
// true probability. Predictions on fresh covariates, grouped by the decile
// of the true probability.
TEST(DebiasedPredict, RemovesShrinkageToExtremes) {
  Eigen::VectorXd beta;
  const Dataset d = oracle::simulated_dataset(4000, 800, kGamma, 77, &beta);
  const FitResult f = fit_mle(d);
  const SolutionTriple t = solve_system(0.2, kGamma);
  Rng rng = make_rng(77, 1, stream_tag::data);
  const Eigen::MatrixXd xs = gen_gaussian_design(20000, 800, rng) * std::sqrt(5.0);
  const int bins = 10;
  std::vector<std::vector<double>> truth(bins);
  std::vector<std::vector<double>> raw(bins);
  std::vector<std::vector<double>> deb(bins);
  int middle = 0;
  int raw_extreme = 0;
  int deb_extreme = 0;
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    const Eigen::VectorXd x = xs.row(i).transpose();
    const double tr = rho_prime(x.dot(beta));
    const double r = debiased_predict(x, f.beta_hat, 1.0);
    const double db = debiased_predict(x, f.beta_hat, t.alpha_star);
    const auto b = static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(tr * bins)));
    truth[b].push_back(tr);
    raw[b].push_back(r);
    deb[b].push_back(db);
    if (tr > 0.2 && tr < 0.8) {
      ++middle;
      raw_extreme += (r < 0.02 || r > 0.98) ? 1 : 0;
      deb_extreme += (db < 0.02 || db > 0.98) ? 1 : 0;
    }
  }
  double raw_dev = 0.0;
  double deb_dev = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (truth[b].size() < 100) {
      continue;
    }
    const double m = median(truth[b]);
    raw_dev = std::max(raw_dev, std::fabs(median(raw[b]) - m));
    deb_dev = std::max(deb_dev, std::fabs(median(deb[b]) - m));
  }
  EXPECT_LT(deb_dev, 0.05);
  EXPECT_GT(raw_dev, 0.05);
  EXPECT_GT(raw_extreme, 5 * deb_extreme);
  EXPECT_GT(raw_extreme, middle / 20);
}

TEST(ColumnVariances, PopulationDenominator) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 2, 0, 3, 0, 4, 1;
  const Eigen::VectorXd v = column_variances(X);
  EXPECT_DOUBLE_EQ(v[0], 1.25);
  EXPECT_DOUBLE_EQ(v[1], 0.1875);
}

TEST(Adjust, Report) {
  const Dataset d = oracle::simulated_dataset(1000, 100, 1.0, 910);
  const FitResult f = fit_mle(d);
  const SolutionTriple t = solve_system(0.1, 1.0);
  AdjustOptions opts;
  opts.lrt_coordinates = {0, 50, 99};
  const AdjustedInference a = adjust(d, f, t, TripleSource::probe_frontier, opts);
  EXPECT_EQ(a.lrt_factor, t.kappa * t.sigma_star * t.sigma_star / t.lambda_star);
  EXPECT_EQ(a.source, TripleSource::probe_frontier);
  EXPECT_EQ(a.triple_used.alpha_star, t.alpha_star);
  EXPECT_EQ(a.beta_debiased, f.beta_hat / t.alpha_star);
  ASSERT_EQ(a.tested.size(), 3u);
  ASSERT_EQ(a.pvalues.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_GE(a.pvalues[k], 0.0);
    EXPECT_LE(a.pvalues[k], 1.0);
    EXPECT_GE(a.pvalues[k], a.pvalues_classical[k]);
    EXPECT_NEAR(a.pvalues[k], lrt_pvalue(a.two_llr[k], a.lrt_factor), 1e-15);
  }
  const Eigen::VectorXd v = column_variances(d.X);
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    EXPECT_DOUBLE_EQ(a.se_corrected[j], t.sigma_star / std::sqrt(1000.0 * v[j]));
  }
  opts.native_scaling = true;
  opts.run_lrt = false;
  const AdjustedInference native = adjust(d, f, t, TripleSource::theoretical, opts);
  EXPECT_TRUE(native.pvalues.empty());
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    EXPECT_NEAR(native.se_corrected[j], t.sigma_star, 1e-12);
  }
}

TEST(Adjust, RequiresConvergedFit) {
  const Dataset d = oracle::simulated_dataset(300, 30, 1.0, 911);
  FitResult f = fit_mle(d);
  f.converged = false;
  EXPECT_THROW(adjust(d, f, solve_system(0.1, 1.0), TripleSource::theoretical), NonConvergence);
}
