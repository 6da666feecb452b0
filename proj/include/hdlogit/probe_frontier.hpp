#pragma once

// Signal-strength estimation from the subsample size at which the data
// become separable half of the time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "hdlogit/dataset.hpp"
#include "hdlogit/errors.hpp"
#include "hdlogit/glm_fit.hpp"
#include "hdlogit/parallel.hpp"
#include "hdlogit/phase_boundary.hpp"
#include "hdlogit/rng.hpp"

namespace hdlogit {

/// nested: subsample b of every size is a prefix of one random permutation,
/// so each b needs a single incremental LP scan.
/// independent: a fresh draw and a fresh LP for every (kappa_j, b).
enum class ProbeScheme { nested, independent };

inline std::string to_string(ProbeScheme s) {
  return s == ProbeScheme::nested ? "nested" : "independent";
}

struct ProbeOptions {
  double grid_step = 1e-3;
  int B = 50;
  double threshold = 0.5;
  std::uint64_t seed = 0;
  ProbeScheme scheme = ProbeScheme::nested;
  /// Scan at coarse_step first, then at grid_step inside the bracketing interval.
  bool coarse_to_fine = false;
  double coarse_step = 1e-2;
  double kappa_max = 0.5;
  int workers = 0;
};

struct ProbeFrontierResult {
  std::vector<double> kappa_grid;
  std::vector<Eigen::Index> subsample_sizes;
  std::vector<double> pi_hat;
  double kappa_hat = 0.0;
  double gamma_hat = 0.0;
  int B = 0;
  std::uint64_t seed = 0;
  ProbeScheme scheme = ProbeScheme::nested;
};

/// Uniform sample of n_j rows without replacement.
inline Dataset subsample(const Dataset& data, Eigen::Index n_j, Rng& rng) {
  if (n_j <= data.p() || n_j > data.n()) {
    throw InvalidArgument("subsample: need p < n_j <= n (n_j = " + std::to_string(n_j) + ")");
  }
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.n()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  Dataset out;
  out.design_tag = data.design_tag;
  out.X.resize(n_j, data.p());
  out.y.resize(n_j);
  for (Eigen::Index k = 0; k < n_j; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    out.X.row(k) = data.X.row(i);
    out.y[k] = data.y[i];
  }
  return out;
}

/// Linear interpolation of the curve to `level` between two grid points.
inline double interpolate_crossing(double k0, double pi0, double k1, double pi1, double level) {
  if (pi1 == pi0) {
    return k1;
  }
  return k0 + (level - pi0) / (pi1 - pi0) * (k1 - k0);
}

namespace detail {

inline Eigen::Index subsample_size(Eigen::Index p, double kappa) {
  return static_cast<Eigen::Index>(std::llround(static_cast<double>(p) / kappa));
}

// Largest separable prefix size of each permutation.
inline std::vector<Eigen::Index> nested_thresholds(const Dataset& data, const ProbeOptions& opts,
                                                   Eigen::Index smallest) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(opts.B));
  parallel_for(static_cast<std::size_t>(opts.B), opts.workers, [&](std::size_t b) {
    Rng rng = make_rng(opts.seed, b, stream_tag::probe);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(data.n()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    SeparationProbe probe(data, order);
    out[b] = probe.last_separable(smallest, data.n());
  });
  return out;
}

class CurveEvaluator {
public:
  CurveEvaluator(const Dataset& data, const ProbeOptions& opts) : data_(data), opts_(opts) {
    if (opts.scheme == ProbeScheme::nested) {
      const Eigen::Index smallest =
          std::max(data.p() + 1, subsample_size(data.p(), opts.kappa_max));
      thresholds_ = nested_thresholds(data, opts, smallest);
    }
  }

  double operator()(Eigen::Index n_j) {
    auto it = cache_.find(n_j);
    if (it != cache_.end()) {
      return it->second;
    }
    int count = 0;
    if (opts_.scheme == ProbeScheme::nested) {
      for (Eigen::Index t : thresholds_) {
        count += n_j <= t ? 1 : 0;
      }
    } else {
      std::vector<char> sep(static_cast<std::size_t>(opts_.B), 0);
      parallel_for(static_cast<std::size_t>(opts_.B), opts_.workers, [&](std::size_t b) {
        Rng rng = make_rng(opts_.seed, static_cast<std::uint64_t>(n_j) << 20 | b,
                           stream_tag::probe);
        sep[b] = check_separation(subsample(data_, n_j, rng)) ? 1 : 0;
      });
      count = static_cast<int>(std::count(sep.begin(), sep.end(), 1));
    }
    const double pi = static_cast<double>(count) / static_cast<double>(opts_.B);
    cache_.emplace(n_j, pi);
    return pi;
  }

private:
  const Dataset& data_;
  const ProbeOptions& opts_;
  std::vector<Eigen::Index> thresholds_;
  std::map<Eigen::Index, double> cache_;
};

} // namespace detail

inline ProbeFrontierResult estimate_gamma(const Dataset& data, const ProbeOptions& opts = {}) {
  data.validate();
  if (opts.B < 1) {
    throw InvalidArgument("estimate_gamma: B must be >= 1");
  }
  if (!(opts.grid_step > 0.0) || !(opts.coarse_step > 0.0)) {
    throw InvalidArgument("estimate_gamma: grid steps must be > 0");
  }
  if (!(opts.threshold > 0.0 && opts.threshold <= 1.0)) {
    throw InvalidArgument("estimate_gamma: threshold must be in (0, 1]");
  }
  const double p = static_cast<double>(data.p());
  const double kappa0 = p / static_cast<double>(data.n());
  if (!(kappa0 < opts.kappa_max)) {
    throw InvalidArgument("estimate_gamma: p/n must be below " + std::to_string(opts.kappa_max));
  }
  if (check_separation(data)) {
    throw FullDataSeparated("the full dataset is separable; the MLE does not exist");
  }
  ProbeFrontierResult res;
  res.B = opts.B;
  res.seed = opts.seed;
  res.scheme = opts.scheme;
  detail::CurveEvaluator curve(data, opts);

  // Scans kappa_j = start + j step (j >= 1) up to kappa_max; returns the
  // index in res of the first point at or above the threshold, or -1.
  auto scan = [&](double start, double step, double stop) -> long {
    for (long j = 1;; ++j) {
      const double kappa = start + static_cast<double>(j) * step;
      if (kappa > stop + 1e-12) {
        return -1;
      }
      const Eigen::Index n_j = detail::subsample_size(data.p(), kappa);
      res.kappa_grid.push_back(kappa);
      res.subsample_sizes.push_back(n_j);
      res.pi_hat.push_back(curve(n_j));
      if (res.pi_hat.back() >= opts.threshold) {
        return static_cast<long>(res.pi_hat.size()) - 1;
      }
    }
  };

  res.kappa_grid.push_back(kappa0);
  res.subsample_sizes.push_back(data.n());
  res.pi_hat.push_back(0.0);
  long hit = -1;
  if (opts.coarse_to_fine) {
    const long coarse = scan(kappa0, opts.coarse_step, opts.kappa_max);
    if (coarse >= 0) {
      const double lo = res.kappa_grid[static_cast<std::size_t>(coarse - 1)];
      const double hi = res.kappa_grid[static_cast<std::size_t>(coarse)];
      const std::size_t keep = static_cast<std::size_t>(coarse);
      res.kappa_grid.resize(keep);
      res.subsample_sizes.resize(keep);
      res.pi_hat.resize(keep);
      hit = scan(lo, opts.grid_step, hi);
      if (hit < 0) {
        // Refinement points all fell below the threshold; the coarse point holds.
        res.kappa_grid.push_back(hi);
        res.subsample_sizes.push_back(detail::subsample_size(data.p(), hi));
        res.pi_hat.push_back(curve(res.subsample_sizes.back()));
        hit = static_cast<long>(res.pi_hat.size()) - 1;
      }
    }
  } else {
    hit = scan(kappa0, opts.grid_step, opts.kappa_max);
  }
  if (hit < 0) {
    throw FrontierNotReached("separation frequency stayed below " +
                             std::to_string(opts.threshold) + " for every kappa up to " +
                             std::to_string(opts.kappa_max));
  }
  const auto h = static_cast<std::size_t>(hit);
  res.kappa_hat = interpolate_crossing(res.kappa_grid[h - 1], res.pi_hat[h - 1],
                                       res.kappa_grid[h], res.pi_hat[h], opts.threshold);
  res.gamma_hat = res.kappa_hat >= 0.5 ? 0.0 : g_mle(res.kappa_hat);
  return res;
}

inline void write_curve_csv(std::ostream& out, const ProbeFrontierResult& r) {
  out << "kappa,subsample_size,pi_hat\n";
  out.precision(17);
  for (std::size_t j = 0; j < r.kappa_grid.size(); ++j) {
    out << r.kappa_grid[j] << ',' << r.subsample_sizes[j] << ',' << r.pi_hat[j] << '\n';
  }
}

} // namespace hdlogit
