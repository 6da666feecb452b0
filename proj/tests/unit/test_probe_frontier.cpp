#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "hdlogit/probe_frontier.hpp"
#include "test_support.hpp"

using namespace hdlogit;

namespace {

// Separable: the labels switch once along an affine direction.
Dataset small_dataset() {
  Dataset d;
  d.X.resize(10, 2);
  d.y.resize(10);
  for (int i = 0; i < 10; ++i) {
    d.X(i, 0) = i;
    d.X(i, 1) = 100 + i;
    d.y[i] = i >= 5 ? 1 : 0;
  }
  return d;
}

// Pool-adjacent-violators fit of a nondecreasing sequence.
std::vector<double> isotonic(const std::vector<double>& v) {
  std::vector<double> level;
  std::vector<int> weight;
  for (double x : v) {
    level.push_back(x);
    weight.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const std::size_t k = level.size() - 1;
      const int w = weight[k - 1] + weight[k];
      level[k - 1] = (level[k - 1] * weight[k - 1] + level[k] * weight[k]) / w;
      weight[k - 1] = w;
      level.pop_back();
      weight.pop_back();
    }
  }
  std::vector<double> out;
  for (std::size_t k = 0; k < level.size(); ++k) {
    out.insert(out.end(), static_cast<std::size_t>(weight[k]), level[k]);
  }
  return out;
}

} // namespace

TEST(Subsample, InclusionFrequencies) {
  const Dataset d = small_dataset();
  Dataset narrow;
  narrow.X = d.X.leftCols(1);
  narrow.y = d.y;
  Rng rng = make_rng(5, 0, stream_tag::probe);
  std::vector<int> hits(10, 0);
  const int draws = 10000;
  for (int r = 0; r < draws; ++r) {
    const Dataset s = subsample(narrow, 5, rng);
    for (Eigen::Index k = 0; k < s.n(); ++k) {
      ++hits[static_cast<std::size_t>(s.X(k, 0))];
    }
  }
  for (int h : hits) {
    EXPECT_NEAR(h / static_cast<double>(draws), 0.5, 0.02);
  }
}

TEST(Subsample, RowsAreDistinctAndFullSizeIsAPermutation) {
  const Dataset d = small_dataset();
  Rng rng = make_rng(6, 0, stream_tag::probe);
  const Dataset s = subsample(d, 7, rng);
  std::set<double> seen;
  for (Eigen::Index k = 0; k < s.n(); ++k) {
    EXPECT_TRUE(seen.insert(s.X(k, 0)).second);
    const int i = static_cast<int>(s.X(k, 0));
    EXPECT_EQ(s.X(k, 1), d.X(i, 1));
    EXPECT_EQ(s.y[k], d.y[i]);
  }
  const Dataset full = subsample(d, 10, rng);
  std::vector<double> col(full.X.col(0).data(), full.X.col(0).data() + 10);
  std::sort(col.begin(), col.end());
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(col[static_cast<std::size_t>(i)], i);
  }
  EXPECT_EQ(check_separation(full), check_separation(d));
}

TEST(Subsample, RejectsOutOfRangeSizes) {
  const Dataset d = small_dataset();
  Rng rng = make_rng(7, 0, stream_tag::probe);
  EXPECT_THROW(subsample(d, 2, rng), InvalidArgument);
  EXPECT_THROW(subsample(d, 11, rng), InvalidArgument);
}

TEST(InterpolateCrossing, MidpointAndJump) {
  EXPECT_DOUBLE_EQ(interpolate_crossing(0.2, 0.2, 0.201, 0.8, 0.5), 0.2005);
  EXPECT_DOUBLE_EQ(interpolate_crossing(0.2, 0.0, 0.201, 1.0, 0.5), 0.2005);
  EXPECT_DOUBLE_EQ(interpolate_crossing(0.2, 0.4, 0.201, 0.5, 0.5), 0.201);
}

TEST(SubsampleSize, RoundsToNearest) {
  EXPECT_EQ(detail::subsample_size(400, 0.3), 1333);
  EXPECT_EQ(detail::subsample_size(400, 0.301), 1329);
  EXPECT_EQ(detail::subsample_size(100, 0.25), 400);
}

TEST(EstimateGamma, RecoversSignalStrength) {
  const double gamma = std::sqrt(5.0);
  const Dataset d = oracle::simulated_dataset(4000, 400, gamma, 501);
  ProbeOptions opts;
  opts.seed = 11;
  const ProbeFrontierResult r = estimate_gamma(d, opts);
  EXPECT_NEAR(r.gamma_hat, gamma, 0.05 * gamma);
  EXPECT_EQ(r.B, 50);
  EXPECT_EQ(r.seed, 11u);
  ASSERT_GE(r.kappa_grid.size(), 2u);
  const std::size_t h = r.kappa_grid.size() - 1;
  EXPECT_GE(r.pi_hat[h], 0.5);
  EXPECT_LT(r.pi_hat[h - 1], 0.5);
  EXPECT_GE(r.kappa_hat, r.kappa_grid[h - 1]);
  EXPECT_LE(r.kappa_hat, r.kappa_grid[h]);
  EXPECT_NEAR(r.gamma_hat, g_mle(r.kappa_hat), 1e-9);
  for (std::size_t j = 0; j < r.pi_hat.size(); ++j) {
    const double count = r.pi_hat[j] * r.B;
    EXPECT_NEAR(count, std::round(count), 1e-9);
    EXPECT_EQ(r.subsample_sizes[j], j == 0 ? d.n() : detail::subsample_size(400, r.kappa_grid[j]));
  }
  // Plugging the estimate into the state evolution stays close to the truth.
  const SolutionTriple truth = solve_system(0.1, gamma);
  const SolutionTriple est = solve_system(0.1, r.gamma_hat);
  EXPECT_NEAR(est.alpha_star / truth.alpha_star, 1.0, 0.05);
  EXPECT_NEAR(est.sigma_star / truth.sigma_star, 1.0, 0.05);
  EXPECT_NEAR(est.lambda_star / truth.lambda_star, 1.0, 0.05);
}

TEST(EstimateGamma, DeterministicForFixedSeed) {
  const Dataset d = oracle::simulated_dataset(1000, 100, 2.0, 502);
  ProbeOptions opts;
  opts.seed = 3;
  opts.B = 20;
  const ProbeFrontierResult a = estimate_gamma(d, opts);
  opts.workers = 1;
  const ProbeFrontierResult b = estimate_gamma(d, opts);
  EXPECT_EQ(a.kappa_grid, b.kappa_grid);
  EXPECT_EQ(a.pi_hat, b.pi_hat);
  EXPECT_EQ(a.kappa_hat, b.kappa_hat);
  EXPECT_EQ(a.gamma_hat, b.gamma_hat);
  std::ostringstream ca;
  std::ostringstream cb;
  write_curve_csv(ca, a);
  write_curve_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ca.str().substr(0, ca.str().find('\n')), "kappa,subsample_size,pi_hat");
}

TEST(EstimateGamma, CurveIsMonotoneUpToNoise) {
  const Dataset d = oracle::simulated_dataset(1000, 100, 1.0, 503);
  for (ProbeScheme scheme : {ProbeScheme::nested, ProbeScheme::independent}) {
    ProbeOptions opts;
    opts.seed = 4;
    opts.scheme = scheme;
    const ProbeFrontierResult r = estimate_gamma(d, opts);
    const std::vector<double> iso = isotonic(r.pi_hat);
    for (std::size_t j = 0; j < iso.size(); ++j) {
      EXPECT_LT(std::fabs(iso[j] - r.pi_hat[j]), 0.15) << to_string(scheme) << ' ' << j;
    }
    if (scheme == ProbeScheme::nested) {
      EXPECT_TRUE(std::is_sorted(r.pi_hat.begin(), r.pi_hat.end()));
    }
  }
}

TEST(EstimateGamma, SchemesAgree) {
  const Dataset d = oracle::simulated_dataset(1000, 100, 2.0, 504);
  ProbeOptions opts;
  opts.seed = 8;
  const double nested = estimate_gamma(d, opts).gamma_hat;
  opts.scheme = ProbeScheme::independent;
  const double independent = estimate_gamma(d, opts).gamma_hat;
  EXPECT_NEAR(nested, independent, 0.15 * nested);
}

TEST(EstimateGamma, CoarseToFineBracketsTheSameCrossing) {
  const Dataset d = oracle::simulated_dataset(1000, 100, 2.0, 505);
  ProbeOptions opts;
  opts.seed = 9;
  const ProbeFrontierResult fine = estimate_gamma(d, opts);
  opts.coarse_to_fine = true;
  const ProbeFrontierResult coarse = estimate_gamma(d, opts);
  EXPECT_NEAR(coarse.kappa_hat, fine.kappa_hat, 2e-3);
  EXPECT_LT(coarse.kappa_grid.size(), fine.kappa_grid.size());
}

// The inverse boundary is flat at large gamma, so single estimates are noisy
// there; each point averages five datasets.
TEST(EstimateGamma, SlopeAgainstTruthNearOne) {
  std::vector<double> truth;
  std::vector<double> est;
  const int reps = 5;
  for (double g = 0.5; g <= 5.01; g += 0.5) {
    double mean = 0.0;
    for (int r = 0; r < reps; ++r) {
      const Dataset d = oracle::simulated_dataset(1000, 100, g, 600 + 37 * r + static_cast<int>(g * 10));
      ProbeOptions opts;
      opts.seed = static_cast<std::uint64_t>(r);
      mean += estimate_gamma(d, opts).gamma_hat / reps;
    }
    truth.push_back(g);
    est.push_back(mean);
  }
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sx += truth[i];
    sy += est[i];
  }
  sx /= truth.size();
  sy /= truth.size();
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sxy += (truth[i] - sx) * (est[i] - sy);
    sxx += (truth[i] - sx) * (truth[i] - sx);
  }
  const double slope = sxy / sxx;
  EXPECT_GE(slope, 0.95);
  EXPECT_LE(slope, 1.1);
}

TEST(EstimateGamma, Errors) {
  const Dataset sep = small_dataset();
  EXPECT_THROW(estimate_gamma(sep), FullDataSeparated);
  const Dataset null_data = oracle::simulated_dataset(2000, 100, 0.0, 506);
  ProbeOptions opts;
  opts.kappa_max = 0.3;
  EXPECT_THROW(estimate_gamma(null_data, opts), FrontierNotReached);
  const Dataset d = oracle::simulated_dataset(1000, 100, 1.0, 507);
  ProbeOptions bad;
  bad.B = 0;
  EXPECT_THROW(estimate_gamma(d, bad), InvalidArgument);
  bad = {};
  bad.threshold = 0.0;
  EXPECT_THROW(estimate_gamma(d, bad), InvalidArgument);
  bad = {};
  bad.kappa_max = 0.05;
  EXPECT_THROW(estimate_gamma(d, bad), InvalidArgument);
}
