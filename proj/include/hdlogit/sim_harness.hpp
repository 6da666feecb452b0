#pragma once

// Synthetic designs, coefficient patterns, responses, and a Monte Carlo
// experiment runner with replicate-keyed random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hdlogit/adjusted_inference.hpp"
#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/glm_fit.hpp"
#include "hdlogit/parallel.hpp"
#include "hdlogit/probe_frontier.hpp"
#include "hdlogit/rng.hpp"
#include "hdlogit/state_evolution.hpp"

namespace hdlogit {

// ---------------------------------------------------------------------------
// Generators

enum class DesignKind { gaussian, snp };

inline std::string to_string(DesignKind d) { return d == DesignKind::gaussian ? "gaussian" : "snp"; }

inline DesignKind parse_design_kind(const std::string& s) {
  if (s == "gaussian") {
    return DesignKind::gaussian;
  }
  if (s == "snp") {
    return DesignKind::snp;
  }
  throw ParseError("unknown design '" + s + "' (expected gaussian or snp)");
}

/// Entries i.i.d. N(0, 1/n).
inline Eigen::MatrixXd gen_gaussian_design(Eigen::Index n, Eigen::Index p, Rng& rng) {
  if (n < 1 || p < 1) {
    throw InvalidArgument("gen_gaussian_design: n and p must be >= 1");
  }
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::MatrixXd X(n, p);
  double* data = X.data();
  for (Eigen::Index k = 0; k < n * p; ++k) {
    data[k] = normal(rng);
  }
  return X;
}

/// Allele frequencies drawn uniformly from [0.25, 0.75].
inline Eigen::VectorXd default_allele_frequencies(Eigen::Index p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.25, 0.75);
  Eigen::VectorXd f(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    f[j] = unif(rng);
  }
  return f;
}

/// Genotypes 0, 1, 2 with probabilities f^2, 2 f (1 - f), (1 - f)^2, each
/// column centered and scaled to mean 0 and variance 1/n (denominator n).
inline Eigen::MatrixXd gen_snp_design(Eigen::Index n, Eigen::Index p,
                                      const Eigen::VectorXd& p_allele, Rng& rng) {
  if (n < 2 || p < 1) {
    throw InvalidArgument("gen_snp_design: need n >= 2 and p >= 1");
  }
  if (p_allele.size() != p) {
    throw InvalidArgument("gen_snp_design: need one allele frequency per column");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd X(n, p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double f = p_allele[j];
    if (!(f >= 0.25 && f <= 0.75)) {
      throw InvalidArgument("gen_snp_design: allele frequencies must lie in [0.25, 0.75]");
    }
    const double p0 = f * f;
    const double p1 = p0 + 2.0 * f * (1.0 - f);
    auto col = X.col(j);
    double var = 0.0;
    do {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = unif(rng);
        col[i] = u < p0 ? 0.0 : (u < p1 ? 1.0 : 2.0);
      }
      col.array() -= col.mean();
      var = col.squaredNorm() / static_cast<double>(n);
    } while (var == 0.0);
    col *= scale / std::sqrt(var);
  }
  return X;
}

enum class BetaPatternKind { half_null_gauss, sparse_pm, iid_gauss, half_const };

/// Coefficient pattern. Parameters by kind:
///   half_null_gauss(mean, var)  first half N(mean, var), second half zero
///   sparse_pm(magnitude, frac)  first round(frac p) entries +-magnitude with random signs
///   iid_gauss(mean, var)        all entries N(mean, var)
///   half_const(value)           first half equal to value, second half zero
struct BetaPattern {
  BetaPatternKind kind = BetaPatternKind::half_const;
  double a = 10.0;
  double b = 0.0;

  static BetaPattern half_null_gauss(double mean, double var) {
    return {BetaPatternKind::half_null_gauss, mean, var};
  }
  static BetaPattern sparse_pm(double magnitude, double fraction) {
    return {BetaPatternKind::sparse_pm, magnitude, fraction};
  }
  static BetaPattern iid_gauss(double mean, double var) {
    return {BetaPatternKind::iid_gauss, mean, var};
  }
  static BetaPattern half_const(double value) { return {BetaPatternKind::half_const, value, 0.0}; }
};

inline std::string to_string(const BetaPattern& bp) {
  std::ostringstream os;
  os.precision(17);
  switch (bp.kind) {
  case BetaPatternKind::half_null_gauss:
    os << "half_null_gauss(" << bp.a << ',' << bp.b << ')';
    break;
  case BetaPatternKind::sparse_pm:
    os << "sparse_pm(" << bp.a << ',' << bp.b << ')';
    break;
  case BetaPatternKind::iid_gauss:
    os << "iid_gauss(" << bp.a << ',' << bp.b << ')';
    break;
  case BetaPatternKind::half_const:
    os << "half_const(" << bp.a << ')';
    break;
  }
  return os.str();
}

/// Parses the form printed by to_string, e.g. "half_null_gauss(7,1)".
inline BetaPattern parse_beta_pattern(const std::string& s) {
  const auto open = s.find('(');
  const auto close = s.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ParseError("beta pattern '" + s + "' is not of the form name(args)");
  }
  const std::string name = s.substr(0, open);
  std::vector<double> args;
  std::stringstream ss(s.substr(open + 1, close - open - 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      args.push_back(std::stod(tok, &used));
      if (tok.find_first_not_of(" \t", used) != std::string::npos) {
        throw std::invalid_argument(tok);
      }
    } catch (const std::logic_error&) {
      throw ParseError("beta pattern '" + s + "': bad number '" + tok + "'");
    }
  }
  auto need = [&](std::size_t k) {
    if (args.size() != k) {
      throw ParseError("beta pattern '" + name + "' takes " + std::to_string(k) + " argument(s)");
    }
  };
  if (name == "half_null_gauss") {
    need(2);
    return BetaPattern::half_null_gauss(args[0], args[1]);
  }
  if (name == "sparse_pm") {
    need(2);
    return BetaPattern::sparse_pm(args[0], args[1]);
  }
  if (name == "iid_gauss") {
    need(2);
    return BetaPattern::iid_gauss(args[0], args[1]);
  }
  if (name == "half_const") {
    need(1);
    return BetaPattern::half_const(args[0]);
  }
  throw ParseError("unknown beta pattern '" + name + "'");
}

/// Draws the pattern, then rescales so that v |beta|^2 = gamma_target^2.
inline Eigen::VectorXd gen_beta(const BetaPattern& pattern, Eigen::Index p, double gamma_target,
                                double column_variance, Rng& rng) {
  if (p < 1) {
    throw InvalidArgument("gen_beta: p must be >= 1");
  }
  if (!(gamma_target >= 0.0) || !(column_variance > 0.0)) {
    throw InvalidArgument("gen_beta: need gamma_target >= 0 and column_variance > 0");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const Eigen::Index half = p / 2;
  switch (pattern.kind) {
  case BetaPatternKind::half_null_gauss:
  case BetaPatternKind::iid_gauss: {
    if (!(pattern.b >= 0.0)) {
      throw InvalidArgument("gen_beta: variance must be >= 0");
    }
    std::normal_distribution<double> normal(pattern.a, std::sqrt(pattern.b));
    const Eigen::Index k = pattern.kind == BetaPatternKind::iid_gauss ? p : half;
    for (Eigen::Index j = 0; j < k; ++j) {
      beta[j] = normal(rng);
    }
    break;
  }
  case BetaPatternKind::sparse_pm: {
    if (!(pattern.b >= 0.0 && pattern.b <= 1.0)) {
      throw InvalidArgument("gen_beta: fraction must lie in [0, 1]");
    }
    std::bernoulli_distribution coin(0.5);
    const auto k = static_cast<Eigen::Index>(std::llround(pattern.b * static_cast<double>(p)));
    for (Eigen::Index j = 0; j < k; ++j) {
      beta[j] = coin(rng) ? pattern.a : -pattern.a;
    }
    break;
  }
  case BetaPatternKind::half_const:
    beta.head(half).setConstant(pattern.a);
    break;
  }
  if (gamma_target == 0.0) {
    return Eigen::VectorXd::Zero(p);
  }
  const double current = std::sqrt(column_variance * beta.squaredNorm());
  if (current == 0.0) {
    throw InvalidArgument("gen_beta: pattern is identically zero but gamma_target > 0");
  }
  beta *= gamma_target / current;
  return beta;
}

/// Independent y_i ~ Bernoulli(rho'(x_i' beta)).
inline Eigen::VectorXd gen_response(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta,
                                    Rng& rng) {
  if (X.cols() != beta.size()) {
    throw InvalidArgument("gen_response: dimension mismatch");
  }
  const Eigen::VectorXd eta = X * beta;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd y(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    y[i] = unif(rng) < rho_prime(eta[i]) ? 1.0 : 0.0;
  }
  return y;
}

inline std::vector<Eigen::Index> null_coordinates(const Eigen::VectorXd& beta) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta[j] == 0.0) {
      out.push_back(j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

enum class ExperimentKind { mle, probe };

inline std::string to_string(ExperimentKind k) { return k == ExperimentKind::mle ? "mle" : "probe"; }

/// Aggregate must satisfy |value - target| <= tolerance.
struct Check {
  std::string metric;
  double target = 0.0;
  double tolerance = 0.0;
};

struct ExperimentConfig {
  std::string name = "custom";
  ExperimentKind kind = ExperimentKind::mle;
  Eigen::Index n = 2000;
  Eigen::Index p = 200;
  DesignKind design = DesignKind::gaussian;
  BetaPattern beta_pattern = BetaPattern::half_const(10.0);
  double gamma_target = std::sqrt(5.0);
  int replicates = 100;
  std::uint64_t seed = 1;
  /// Draw beta once per experiment (true) or once per replicate.
  bool fixed_beta = true;
  /// Coordinates receiving a likelihood-ratio test; negative values count
  /// from the end (-1 is the last coordinate).
  std::vector<long> lrt_coordinates{-1};
  bool plugin_se = false;
  bool record_coefficients = false;
  ProbeOptions probe;
  int workers = 0;
  std::vector<Check> checks;
};

/// Canonical one-line description, the input to config_fingerprint.
inline std::string canonical_string(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "name=" << c.name << ";kind=" << to_string(c.kind) << ";n=" << c.n << ";p=" << c.p
     << ";design=" << to_string(c.design) << ";beta=" << to_string(c.beta_pattern)
     << ";gamma=" << c.gamma_target << ";replicates=" << c.replicates << ";seed=" << c.seed
     << ";fixed_beta=" << c.fixed_beta << ";lrt=";
  for (long j : c.lrt_coordinates) {
    os << j << ',';
  }
  os << ";plugin_se=" << c.plugin_se << ";coefficients=" << c.record_coefficients;
  if (c.kind == ExperimentKind::probe) {
    os << ";probe.B=" << c.probe.B << ";probe.step=" << c.probe.grid_step
       << ";probe.threshold=" << c.probe.threshold << ";probe.scheme=" << to_string(c.probe.scheme)
       << ";probe.coarse=" << c.probe.coarse_to_fine << ";probe.coarse_step=" << c.probe.coarse_step;
  }
  return os.str();
}

/// 64-bit FNV-1a hash of canonical_string, as 16 hex digits.
inline std::string config_fingerprint(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_string(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

struct LrtRecord {
  Eigen::Index coordinate = 0;
  double beta_hat = 0.0;
  double two_llr = 0.0;
  double p_classical = 1.0;
  double p_adjusted = 1.0;
};

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  std::string failure;
  int iterations = 0;
  double alpha_hat = std::numeric_limits<double>::quiet_NaN();
  double sigma2_hat = std::numeric_limits<double>::quiet_NaN();
  double decorrelation = std::numeric_limits<double>::quiet_NaN();
  double bulk_mse = std::numeric_limits<double>::quiet_NaN();
  double plugin_se_null_mean = std::numeric_limits<double>::quiet_NaN();
  double plugin_se_null_max = std::numeric_limits<double>::quiet_NaN();
  std::vector<LrtRecord> lrt;
  Eigen::VectorXd beta;
  Eigen::VectorXd beta_hat;
  // probe experiments
  double kappa_hat = std::numeric_limits<double>::quiet_NaN();
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();
  double alpha_est = std::numeric_limits<double>::quiet_NaN();
  double sigma_est = std::numeric_limits<double>::quiet_NaN();
  double lambda_est = std::numeric_limits<double>::quiet_NaN();
  double factor_est = std::numeric_limits<double>::quiet_NaN();
};

struct Metric {
  std::string name;
  double value = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string fingerprint;
  std::optional<SolutionTriple> triple;
  std::vector<ReplicateRecord> records;
  std::vector<Metric> metrics;

  std::optional<Metric> metric(const std::string& name) const {
    for (const Metric& m : metrics) {
      if (m.name == name) {
        return m;
      }
    }
    return std::nullopt;
  }
};

inline constexpr double kPvalueBins[] = {0.05, 0.01, 0.005, 0.001, 0.0005, 0.0001};

inline std::string bin_label(double level) {
  std::ostringstream os;
  os << level;
  return os.str();
}

/// sup_x |F_n(x) - x| for a sample in [0, 1].
inline double ks_uniform_distance(std::vector<double> sample) {
  if (sample.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double x = sample[i];
    d = std::max({d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

namespace detail {

struct MeanAcc {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  void add(double x) {
    if (std::isfinite(x)) {
      sum += x;
      sum_sq += x * x;
      ++n;
    }
  }
  double mean() const {
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
  }
  double se() const {
    if (n < 2) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    const double m = mean();
    const double var = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
  }
};

inline Eigen::Index resolve_coordinate(long j, Eigen::Index p) {
  const long idx = j < 0 ? static_cast<long>(p) + j : j;
  if (idx < 0 || idx >= static_cast<long>(p)) {
    throw InvalidArgument("coordinate " + std::to_string(j) + " out of range for p = " +
                          std::to_string(p));
  }
  return static_cast<Eigen::Index>(idx);
}

inline void validate_config(const ExperimentConfig& c) {
  if (c.n < 2 || c.p < 1 || c.p >= c.n) {
    throw InvalidArgument("experiment needs 1 <= p < n");
  }
  if (c.replicates < 1) {
    throw InvalidArgument("experiment needs at least one replicate");
  }
  if (!(c.gamma_target >= 0.0)) {
    throw InvalidArgument("gamma_target must be >= 0");
  }
  for (long j : c.lrt_coordinates) {
    resolve_coordinate(j, c.p);
  }
}

inline Eigen::VectorXd draw_beta(const ExperimentConfig& c, std::uint64_t stream) {
  Rng rng = make_rng(c.seed, stream, stream_tag::beta);
  return gen_beta(c.beta_pattern, c.p, c.gamma_target, 1.0 / static_cast<double>(c.n), rng);
}

inline Dataset draw_dataset(const ExperimentConfig& c, const Eigen::VectorXd& beta,
                            const Eigen::VectorXd& alleles, int replicate) {
  Rng rng = make_rng(c.seed, static_cast<std::uint64_t>(replicate), stream_tag::data);
  Dataset d;
  if (c.design == DesignKind::gaussian) {
    d.X = gen_gaussian_design(c.n, c.p, rng);
    d.design_tag = DesignTag::gaussian;
  } else {
    d.X = gen_snp_design(c.n, c.p, alleles, rng);
    d.design_tag = DesignTag::snp;
  }
  d.y = gen_response(d.X, beta, rng);
  return d;
}

inline void run_mle_replicate(const ExperimentConfig& c, const Dataset& d,
                              const Eigen::VectorXd& beta, const std::optional<SolutionTriple>& tr,
                              ReplicateRecord& rec) {
  const FitResult fit = fit_mle(d);
  rec.iterations = fit.iterations;
  if (fit.separated) {
    rec.failure = "separated";
    return;
  }
  if (!fit.converged) {
    rec.failure = "nonconvergence";
    return;
  }
  const Eigen::VectorXd& bh = fit.beta_hat;
  double num = 0.0;
  double den = 0.0;
  double null_sq = 0.0;
  int null_count = 0;
  for (Eigen::Index j = 0; j < c.p; ++j) {
    if (beta[j] != 0.0) {
      num += bh[j];
      den += beta[j];
    } else {
      null_sq += bh[j] * bh[j];
      ++null_count;
    }
  }
  if (den != 0.0) {
    rec.alpha_hat = num / den;
  }
  if (null_count > 0) {
    rec.sigma2_hat = null_sq / null_count;
  }
  if (tr) {
    const Eigen::VectorXd centered = bh - tr->alpha_star * beta;
    rec.decorrelation = centered.dot(beta) / static_cast<double>(c.p);
    rec.bulk_mse = centered.squaredNorm() / static_cast<double>(c.p);
  }
  if (c.plugin_se && null_count > 0) {
    const Eigen::VectorXd se = classical_se_plugin(d, fit);
    double s = 0.0;
    double mx = 0.0;
    for (Eigen::Index j = 0; j < c.p; ++j) {
      if (beta[j] == 0.0) {
        s += se[j];
        mx = std::max(mx, se[j]);
      }
    }
    rec.plugin_se_null_mean = s / null_count;
    rec.plugin_se_null_max = mx;
  }
  for (long jj : c.lrt_coordinates) {
    const Eigen::Index j = resolve_coordinate(jj, c.p);
    LrtRecord l;
    l.coordinate = j;
    l.beta_hat = bh[j];
    l.two_llr = 2.0 * llr_statistic(d, {j}, fit);
    l.p_classical = lrt_pvalue(l.two_llr, 1.0, 1);
    l.p_adjusted = tr ? lrt_pvalue(l.two_llr, tr->lrt_factor(), 1)
                      : std::numeric_limits<double>::quiet_NaN();
    rec.lrt.push_back(l);
  }
  if (c.record_coefficients) {
    rec.beta = beta;
    rec.beta_hat = bh;
  }
  rec.ok = true;
}

inline void run_probe_replicate(const ExperimentConfig& c, const Dataset& d, int replicate,
                                ReplicateRecord& rec) {
  ProbeOptions po = c.probe;
  po.seed = c.seed ^ (static_cast<std::uint64_t>(replicate) * 0x9e3779b97f4a7c15ULL);
  po.workers = 1;
  try {
    const ProbeFrontierResult pr = estimate_gamma(d, po);
    rec.kappa_hat = pr.kappa_hat;
    rec.gamma_hat = pr.gamma_hat;
    const SolutionTriple t =
        solve_system(static_cast<double>(c.p) / static_cast<double>(c.n), pr.gamma_hat);
    rec.alpha_est = t.alpha_star;
    rec.sigma_est = t.sigma_star;
    rec.lambda_est = t.lambda_star;
    rec.factor_est = t.lrt_factor();
    rec.ok = true;
  } catch (const ProbeFailure& e) {
    rec.failure = std::string("probe: ") + e.what();
  } catch (const NonConvergence& e) {
    rec.failure = std::string("nonconvergence: ") + e.what();
  } catch (const OutsideExistenceRegion& e) {
    rec.failure = std::string("region: ") + e.what();
  }
}

inline void aggregate(ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  std::size_t ok = 0;
  std::size_t separated = 0;
  for (const ReplicateRecord& r : res.records) {
    ok += r.ok ? 1 : 0;
    separated += r.failure == "separated" ? 1 : 0;
  }
  res.metrics.push_back({"replicates_ok", static_cast<double>(ok), 0.0});
  res.metrics.push_back({"replicates_failed", static_cast<double>(res.records.size() - ok), 0.0});
  res.metrics.push_back({"replicates_separated", static_cast<double>(separated), 0.0});
  if (c.kind == ExperimentKind::probe) {
    MeanAcc g, k, a, s, f;
    for (const ReplicateRecord& r : res.records) {
      if (r.ok) {
        g.add(r.gamma_hat);
        k.add(r.kappa_hat);
        a.add(r.alpha_est);
        s.add(r.sigma_est);
        f.add(r.factor_est);
      }
    }
    res.metrics.push_back({"gamma_hat", g.mean(), g.se()});
    res.metrics.push_back({"kappa_hat", k.mean(), k.se()});
    res.metrics.push_back({"alpha_hat", a.mean(), a.se()});
    res.metrics.push_back({"sigma_hat", s.mean(), s.se()});
    res.metrics.push_back({"lrt_factor", f.mean(), f.se()});
    return;
  }
  MeanAcc alpha, sigma2, sigma_root, decor, bulk, se_mean, se_max, two_llr;
  std::vector<double> p_cls;
  std::vector<double> p_adj;
  for (const ReplicateRecord& r : res.records) {
    if (!r.ok) {
      continue;
    }
    alpha.add(r.alpha_hat);
    sigma2.add(r.sigma2_hat);
    sigma_root.add(std::sqrt(r.sigma2_hat));
    decor.add(r.decorrelation);
    bulk.add(r.bulk_mse);
    se_mean.add(r.plugin_se_null_mean);
    se_max.add(r.plugin_se_null_max);
    for (const LrtRecord& l : r.lrt) {
      two_llr.add(l.two_llr);
      p_cls.push_back(l.p_classical);
      if (std::isfinite(l.p_adjusted)) {
        p_adj.push_back(l.p_adjusted);
      }
    }
  }
  res.metrics.push_back({"alpha_hat", alpha.mean(), alpha.se()});
  // Pooled: square root of the average per-replicate estimate of sigma^2.
  const double s2 = sigma2.mean();
  res.metrics.push_back({"sigma_hat", std::sqrt(s2), sigma2.se() / (2.0 * std::sqrt(s2))});
  res.metrics.push_back({"sigma_hat_rootmean", sigma_root.mean(), sigma_root.se()});
  res.metrics.push_back({"decorrelation", decor.mean(), decor.se()});
  res.metrics.push_back({"bulk_mse", bulk.mean(), bulk.se()});
  if (c.plugin_se) {
    res.metrics.push_back({"plugin_se_null_mean", se_mean.mean(), se_mean.se()});
    res.metrics.push_back({"plugin_se_null_max", se_max.mean(), se_max.se()});
  }
  res.metrics.push_back({"two_llr_mean", two_llr.mean(), two_llr.se()});
  auto bins = [&](const std::vector<double>& ps, const std::string& prefix) {
    if (ps.empty()) {
      return;
    }
    const double n = static_cast<double>(ps.size());
    for (double level : kPvalueBins) {
      const double frac =
          static_cast<double>(std::count_if(ps.begin(), ps.end(), [&](double v) { return v <= level; })) / n;
      res.metrics.push_back({prefix + "_le_" + bin_label(level), frac, std::sqrt(frac * (1.0 - frac) / n)});
    }
    const double ks = ks_uniform_distance(ps);
    const double crit = ks_critical_1pct(ps.size());
    res.metrics.push_back({prefix + "_ks", ks, 0.0});
    res.metrics.push_back({prefix + "_ks_critical_1pct", crit, 0.0});
    res.metrics.push_back({prefix + "_ks_pass", ks < crit ? 1.0 : 0.0, 0.0});
  };
  bins(p_cls, "p_classical");
  bins(p_adj, "p_adjusted");
}

} // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  detail::validate_config(config);
  ExperimentResult res;
  res.config = config;
  res.fingerprint = config_fingerprint(config);
  const double kappa = static_cast<double>(config.p) / static_cast<double>(config.n);
  if (config.kind == ExperimentKind::mle) {
    try {
      res.triple = solve_system(kappa, config.gamma_target);
    } catch (const OutsideExistenceRegion&) {
      res.triple.reset();
    } catch (const NonConvergence&) {
      res.triple.reset();
    }
  }
  Eigen::VectorXd alleles;
  if (config.design == DesignKind::snp) {
    Rng rng = make_rng(config.seed, 0, stream_tag::allele);
    alleles = default_allele_frequencies(config.p, rng);
  }
  const Eigen::VectorXd fixed = config.fixed_beta ? detail::draw_beta(config, 0) : Eigen::VectorXd();
  res.records.resize(static_cast<std::size_t>(config.replicates));
  parallel_for(res.records.size(), config.workers, [&](std::size_t r) {
    ReplicateRecord& rec = res.records[r];
    rec.replicate = static_cast<int>(r);
    const Eigen::VectorXd beta = config.fixed_beta ? fixed : detail::draw_beta(config, r + 1);
    const Dataset d = detail::draw_dataset(config, beta, alleles, static_cast<int>(r));
    try {
      if (config.kind == ExperimentKind::mle) {
        detail::run_mle_replicate(config, d, beta, res.triple, rec);
      } else {
        detail::run_probe_replicate(config, d, static_cast<int>(r), rec);
      }
    } catch (const Separated&) {
      // A constrained refit can still hit separation when the full fit did not.
      rec = ReplicateRecord{};
      rec.replicate = static_cast<int>(r);
      rec.failure = "separated";
    } catch (const NonConvergence&) {
      rec = ReplicateRecord{};
      rec.replicate = static_cast<int>(r);
      rec.failure = "nonconvergence";
    }
  });
  detail::aggregate(res);
  return res;
}

struct CheckOutcome {
  Check check;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;
};

inline std::vector<CheckOutcome> evaluate_checks(const ExperimentResult& res) {
  std::vector<CheckOutcome> out;
  for (const Check& c : res.config.checks) {
    CheckOutcome o;
    o.check = c;
    if (const auto m = res.metric(c.metric)) {
      o.value = m->value;
      o.pass = std::fabs(m->value - c.target) <= c.tolerance;
    }
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets for the standard studies

inline std::vector<std::string> preset_names() {
  return {"table1", "table2", "table3", "table4", "snp"};
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.gamma_target = std::sqrt(5.0);
  if (name == "table1") {
    // Classical LRT p-values, kappa = 0.2.
    c.n = 4000;
    c.p = 800;
    c.beta_pattern = BetaPattern::half_null_gauss(7.0, 1.0);
    c.replicates = 2000;
    c.checks = {{"p_classical_le_0.05", 0.1077, 0.015}};
  } else if (name == "table2") {
    // Bias and spread of the MLE, kappa = 0.1.
    c.n = 2000;
    c.p = 200;
    c.beta_pattern = BetaPattern::half_const(10.0);
    c.replicates = 5000;
    c.checks = {{"alpha_hat", 1.1703, 0.003}, {"sigma_hat", 3.3567, 0.01}};
  } else if (name == "table3") {
    // Rescaled LRT p-values, kappa = 0.1.
    c.n = 4000;
    c.p = 400;
    c.beta_pattern = BetaPattern::half_const(10.0);
    c.replicates = 20000;
    c.checks = {{"p_adjusted_le_0.05", 0.05, 0.005},
                {"p_adjusted_le_0.01", 0.01, 0.0025},
                {"p_adjusted_ks_pass", 1.0, 0.0}};
  } else if (name == "table4") {
    // ProbeFrontier estimates of gamma, kappa = 0.1.
    c.kind = ExperimentKind::probe;
    c.n = 4000;
    c.p = 400;
    c.beta_pattern = BetaPattern::half_const(10.0);
    c.replicates = 20;
    c.checks = {{"gamma_hat", 2.28, 0.04}};
  } else if (name == "snp") {
    // Rescaled LRT p-values under a Hardy-Weinberg design.
    c.design = DesignKind::snp;
    c.n = 4000;
    c.p = 400;
    c.beta_pattern = BetaPattern::half_const(10.0);
    c.replicates = 5000;
    c.checks = {{"p_adjusted_ks_pass", 1.0, 0.0}};
  } else {
    throw InvalidArgument("unknown preset '" + name + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {
inline void put(std::ostream& out, double v) {
  if (std::isfinite(v)) {
    out << v;
  }
}
} // namespace detail

inline void write_replicates_csv(std::ostream& out, const ExperimentResult& res) {
  out.precision(17);
  if (res.config.kind == ExperimentKind::probe) {
    out << "replicate,ok,failure,kappa_hat,gamma_hat,alpha_hat,sigma_hat,lambda_hat,lrt_factor\n";
    for (const ReplicateRecord& r : res.records) {
      out << r.replicate << ',' << (r.ok ? 1 : 0) << ',' << r.failure << ',';
      detail::put(out, r.kappa_hat);
      out << ',';
      detail::put(out, r.gamma_hat);
      out << ',';
      detail::put(out, r.alpha_est);
      out << ',';
      detail::put(out, r.sigma_est);
      out << ',';
      detail::put(out, r.lambda_est);
      out << ',';
      detail::put(out, r.factor_est);
      out << '\n';
    }
    return;
  }
  out << "replicate,ok,failure,iterations,alpha_hat,sigma2_hat,decorrelation,bulk_mse,"
         "plugin_se_null_mean,plugin_se_null_max\n";
  for (const ReplicateRecord& r : res.records) {
    out << r.replicate << ',' << (r.ok ? 1 : 0) << ',' << r.failure << ',' << r.iterations << ',';
    for (double v : {r.alpha_hat, r.sigma2_hat, r.decorrelation, r.bulk_mse, r.plugin_se_null_mean}) {
      detail::put(out, v);
      out << ',';
    }
    detail::put(out, r.plugin_se_null_max);
    out << '\n';
  }
}

inline void write_lrt_csv(std::ostream& out, const ExperimentResult& res) {
  out.precision(17);
  out << "replicate,coordinate,beta_hat,two_llr,p_classical,p_adjusted\n";
  for (const ReplicateRecord& r : res.records) {
    for (const LrtRecord& l : r.lrt) {
      out << r.replicate << ',' << l.coordinate << ',' << l.beta_hat << ',' << l.two_llr << ','
          << l.p_classical << ',';
      detail::put(out, l.p_adjusted);
      out << '\n';
    }
  }
}

inline void write_coefficients_csv(std::ostream& out, const ExperimentResult& res) {
  out.precision(17);
  out << "replicate,coordinate,beta,beta_hat\n";
  for (const ReplicateRecord& r : res.records) {
    for (Eigen::Index j = 0; j < r.beta_hat.size(); ++j) {
      out << r.replicate << ',' << j << ',' << r.beta[j] << ',' << r.beta_hat[j] << '\n';
    }
  }
}

inline void write_summary_csv(std::ostream& out, const ExperimentResult& res) {
  out.precision(17);
  out << "metric,value,se\n";
  for (const Metric& m : res.metrics) {
    out << m.name << ',';
    detail::put(out, m.value);
    out << ',';
    detail::put(out, m.se);
    out << '\n';
  }
}

} // namespace hdlogit
