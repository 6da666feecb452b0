#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdlogit/hdlogit.hpp"

namespace hdlogit::cli {

using nlohmann::json;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string output;
  bool quiet = false;

  std::uint64_t resolved_seed() const {
    if (seed) {
      return *seed;
    }
    if (const char* env = std::getenv("HDLOGIT_SEED")) {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used == std::string(env).size()) {
          return v;
        }
      } catch (const std::logic_error&) {
      }
      throw InvalidArgument(std::string("HDLOGIT_SEED is not an unsigned integer: '") + env + "'");
    }
    return 0;
  }
};

std::string fmt4(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

json triple_json(const SolutionTriple& t) {
  return {{"kappa", t.kappa},
          {"gamma", t.gamma},
          {"alpha_star", t.alpha_star},
          {"sigma_star", t.sigma_star},
          {"lambda_star", t.lambda_star},
          {"lrt_factor", t.lrt_factor()},
          {"residual_norm", t.residual_norm},
          {"iterations", t.iterations}};
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json metric_map(const ExperimentResult& r) {
  json m = json::object();
  for (const Metric& x : r.metrics) {
    m[x.name] = {{"value", x.value}, {"se", x.se}};
  }
  return m;
}

json config_json(const ExperimentConfig& c) {
  json checks = json::array();
  for (const Check& k : c.checks) {
    checks.push_back({{"metric", k.metric}, {"target", k.target}, {"tolerance", k.tolerance}});
  }
  json j = {{"name", c.name},
            {"kind", to_string(c.kind)},
            {"n", c.n},
            {"p", c.p},
            {"design", to_string(c.design)},
            {"beta_pattern", to_string(c.beta_pattern)},
            {"gamma_target", c.gamma_target},
            {"replicates", c.replicates},
            {"seed", c.seed},
            {"fixed_beta", c.fixed_beta},
            {"lrt_coordinates", c.lrt_coordinates},
            {"plugin_se", c.plugin_se},
            {"record_coefficients", c.record_coefficients},
            {"checks", checks}};
  if (c.kind == ExperimentKind::probe) {
    j["probe"] = {{"B", c.probe.B},
                  {"grid_step", c.probe.grid_step},
                  {"threshold", c.probe.threshold},
                  {"scheme", to_string(c.probe.scheme)},
                  {"coarse_to_fine", c.probe.coarse_to_fine},
                  {"coarse_step", c.probe.coarse_step}};
  }
  return j;
}

ProbeScheme parse_scheme(const std::string& s) {
  if (s == "nested") {
    return ProbeScheme::nested;
  }
  if (s == "independent") {
    return ProbeScheme::independent;
  }
  throw ParseError("unknown probe scheme '" + s + "' (expected nested or independent)");
}

ExperimentKind parse_kind(const std::string& s) {
  if (s == "mle") {
    return ExperimentKind::mle;
  }
  if (s == "probe") {
    return ExperimentKind::probe;
  }
  throw ParseError("unknown experiment kind '" + s + "' (expected mle or probe)");
}

// Reads an experiment config; keys mirror ExperimentConfig.
ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open config file '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) {
    throw ParseError("config '" + path + "': top level must be an object");
  }
  ExperimentConfig c;
  if (j.contains("preset")) {
    c = preset(j.at("preset").get<std::string>());
  }
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "preset") {
      } else if (k == "name") {
        c.name = v.get<std::string>();
      } else if (k == "kind") {
        c.kind = parse_kind(v.get<std::string>());
      } else if (k == "n") {
        c.n = v.get<Eigen::Index>();
      } else if (k == "p") {
        c.p = v.get<Eigen::Index>();
      } else if (k == "design") {
        c.design = parse_design_kind(v.get<std::string>());
      } else if (k == "beta_pattern") {
        c.beta_pattern = parse_beta_pattern(v.get<std::string>());
      } else if (k == "gamma_target") {
        c.gamma_target = v.get<double>();
      } else if (k == "replicates") {
        c.replicates = v.get<int>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "fixed_beta") {
        c.fixed_beta = v.get<bool>();
      } else if (k == "lrt_coordinates") {
        c.lrt_coordinates = v.get<std::vector<long>>();
      } else if (k == "plugin_se") {
        c.plugin_se = v.get<bool>();
      } else if (k == "record_coefficients") {
        c.record_coefficients = v.get<bool>();
      } else if (k == "probe") {
        for (auto pt = v.begin(); pt != v.end(); ++pt) {
          const std::string& pk = pt.key();
          if (pk == "B") {
            c.probe.B = pt->get<int>();
          } else if (pk == "grid_step") {
            c.probe.grid_step = pt->get<double>();
          } else if (pk == "threshold") {
            c.probe.threshold = pt->get<double>();
          } else if (pk == "scheme") {
            c.probe.scheme = parse_scheme(pt->get<std::string>());
          } else if (pk == "coarse_to_fine") {
            c.probe.coarse_to_fine = pt->get<bool>();
          } else if (pk == "coarse_step") {
            c.probe.coarse_step = pt->get<double>();
          } else {
            throw ParseError("config '" + path + "': unknown probe key '" + pk + "'");
          }
        }
      } else if (k == "checks") {
        c.checks.clear();
        for (const json& ch : v) {
          c.checks.push_back({ch.at("metric").get<std::string>(), ch.at("target").get<double>(),
                              ch.at("tolerance").get<double>()});
        }
      } else {
        throw ParseError("config '" + path + "': unknown key '" + k + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  return c;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) {
        throw std::invalid_argument(tok);
      }
    } catch (const std::logic_error&) {
      throw ParseError("bad number '" + tok + "' in list '" + s + "'");
    }
  }
  return out;
}

// start:stop:step, inclusive of stop up to rounding.
std::vector<double> parse_range(const std::string& s) {
  std::vector<double> parts;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    parts.push_back(parse_list(tok).at(0));
  }
  if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0]) {
    throw ParseError("range '" + s + "' must be start:stop:step with step > 0 and stop >= start");
  }
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
  for (long k = 0; k <= count; ++k) {
    out.push_back(parts[0] + static_cast<double>(k) * parts[2]);
  }
  return out;
}

class Emitter {
public:
  Emitter(const Globals& g, std::ostream& out, std::ostream& err) : g_(g), out_(out), err_(err) {}

  void json_result(const json& j) {
    const std::string text = j.dump(2) + "\n";
    if (g_.output.empty()) {
      out_ << text;
    } else {
      std::ofstream f(g_.output);
      if (!f) {
        throw InvalidArgument("cannot write output file '" + g_.output + "'");
      }
      f << text;
    }
  }

  std::ostream& human() {
    static std::ostringstream sink;
    if (g_.quiet) {
      sink.str("");
      return sink;
    }
    return err_;
  }

private:
  const Globals& g_;
  std::ostream& out_;
  std::ostream& err_;
};

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) {
    throw InvalidArgument("cannot write '" + path + "'");
  }
  f << content;
}

// --------------------------------------------------------------------------- solve

struct SolveArgs {
  double kappa = 0.0;
  double gamma = 0.0;
  int quad_order = kDefaultQuadOrder;
  double tol = SolveOptions{}.tol;
  int max_iter = SolveOptions{}.max_iter;
};

int cmd_solve(const SolveArgs& a, Emitter& em) {
  SolveOptions opts;
  opts.quad_order = a.quad_order;
  opts.tol = a.tol;
  opts.max_iter = a.max_iter;
  const SolutionTriple t = solve_system(a.kappa, a.gamma, opts);
  json j = triple_json(t);
  j["command"] = "solve";
  j["quad_order"] = a.quad_order;
  em.json_result(j);
  em.human() << "kappa " << fmt4(a.kappa) << "  gamma " << fmt4(a.gamma) << "\n"
             << "alpha* " << fmt4(t.alpha_star) << "  sigma* " << fmt4(t.sigma_star)
             << "  lambda* " << fmt4(t.lambda_star) << "  kappa sigma*^2/lambda* "
             << fmt4(t.lrt_factor()) << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------- boundary

struct BoundaryArgs {
  std::string gammas;
  std::string gamma_range;
  std::string kappas;
};

int cmd_boundary(const BoundaryArgs& a, Emitter& em) {
  std::vector<double> gs;
  if (!a.gammas.empty()) {
    gs = parse_list(a.gammas);
  }
  if (!a.gamma_range.empty()) {
    const auto r = parse_range(a.gamma_range);
    gs.insert(gs.end(), r.begin(), r.end());
  }
  const std::vector<double> ks = a.kappas.empty() ? std::vector<double>{} : parse_list(a.kappas);
  if (gs.empty() && ks.empty()) {
    gs = parse_range("0:5:0.25");
  }
  json points = json::array();
  for (double g : gs) {
    const BoundaryPoint bp = g_mle_inverse(g);
    points.push_back({{"gamma", bp.gamma}, {"kappa_boundary", bp.kappa_boundary}, {"t_argmin", bp.t_argmin}});
    em.human() << "gamma " << fmt4(bp.gamma) << "  kappa_b " << fmt4(bp.kappa_boundary) << "\n";
  }
  json inverse = json::array();
  for (double k : ks) {
    const double g = g_mle(k);
    inverse.push_back({{"kappa", k}, {"gamma_boundary", g}});
    em.human() << "kappa " << fmt4(k) << "  gamma_b " << fmt4(g) << "\n";
  }
  em.json_result({{"command", "boundary"}, {"points", points}, {"inverse", inverse}});
  return kExitOk;
}

// --------------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  bool check_separation = false;
  int max_iter = FitOptions{}.max_iter;
  bool se = false;
};

int cmd_fit(const FitArgs& a, Emitter& em) {
  const Dataset d = load_dataset(a.data);
  d.validate();
  FitOptions opts;
  opts.check_separation = a.check_separation;
  opts.max_iter = a.max_iter;
  const FitResult f = fit_mle(d, opts);
  ensure_converged(f);
  json j = {{"command", "fit"},
            {"data", a.data},
            {"n", d.n()},
            {"p", d.p()},
            {"converged", f.converged},
            {"separated", f.separated},
            {"iterations", f.iterations},
            {"grad_norm", f.grad_norm},
            {"neg_log_likelihood", f.neg_log_likelihood},
            {"beta_hat", vec_json(f.beta_hat)}};
  if (a.se) {
    j["se_plugin"] = vec_json(classical_se_plugin(d, f));
  }
  em.json_result(j);
  em.human() << "n " << d.n() << "  p " << d.p() << "  Newton iterations " << f.iterations
             << "  |grad|_inf " << fmt4(f.grad_norm) << "  l(beta_hat) "
             << fmt4(f.neg_log_likelihood) << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------- probe

struct ProbeArgs {
  std::string data;
  int B = 50;
  double grid_step = 1e-3;
  double threshold = 0.5;
  std::string scheme = "nested";
  bool coarse_to_fine = false;
  std::string curve;
};

ProbeOptions probe_options(const ProbeArgs& a, const Globals& g) {
  ProbeOptions o;
  o.B = a.B;
  o.grid_step = a.grid_step;
  o.threshold = a.threshold;
  o.scheme = parse_scheme(a.scheme);
  o.coarse_to_fine = a.coarse_to_fine;
  o.seed = g.resolved_seed();
  o.workers = g.workers;
  return o;
}

json probe_json(const ProbeFrontierResult& r, const ProbeOptions& o) {
  json curve = json::array();
  for (std::size_t j = 0; j < r.kappa_grid.size(); ++j) {
    curve.push_back({{"kappa", r.kappa_grid[j]}, {"subsample_size", r.subsample_sizes[j]}, {"pi_hat", r.pi_hat[j]}});
  }
  return {{"kappa_hat", r.kappa_hat}, {"gamma_hat", r.gamma_hat}, {"B", r.B},
          {"seed", r.seed},           {"scheme", to_string(r.scheme)},
          {"grid_step", o.grid_step}, {"threshold", o.threshold},
          {"coarse_to_fine", o.coarse_to_fine}, {"curve", curve}};
}

int cmd_probe(const ProbeArgs& a, const Globals& g, Emitter& em) {
  const Dataset d = load_dataset(a.data);
  d.validate();
  const ProbeOptions o = probe_options(a, g);
  const ProbeFrontierResult r = estimate_gamma(d, o);
  if (!a.curve.empty()) {
    std::ofstream f(a.curve);
    if (!f) {
      throw InvalidArgument("cannot write '" + a.curve + "'");
    }
    write_curve_csv(f, r);
  }
  json j = probe_json(r, o);
  j["command"] = "probe";
  j["data"] = a.data;
  em.json_result(j);
  em.human() << "kappa_hat " << fmt4(r.kappa_hat) << "  gamma_hat " << fmt4(r.gamma_hat) << "  (B = "
             << r.B << ", " << r.kappa_grid.size() << " grid points)\n";
  return kExitOk;
}

// --------------------------------------------------------------------------- adjust

struct AdjustArgs {
  std::optional<double> gamma;
  bool probe = false;
  ProbeArgs probe_args;
  bool native_scaling = false;
  std::string lrt = "all";
};

int cmd_adjust(const AdjustArgs& a, const Globals& g, Emitter& em) {
  if (a.gamma.has_value() == a.probe) {
    throw InvalidArgument("adjust: give exactly one of --gamma or --probe");
  }
  const Dataset d = load_dataset(a.probe_args.data);
  d.validate();
  FitOptions fo;
  fo.check_separation = true;
  const FitResult fit = fit_mle(d, fo);
  ensure_converged(fit);
  const double kappa = static_cast<double>(d.p()) / static_cast<double>(d.n());
  double gamma = 0.0;
  json probe_info;
  TripleSource source = TripleSource::theoretical;
  if (a.probe) {
    const ProbeOptions o = probe_options(a.probe_args, g);
    const ProbeFrontierResult r = estimate_gamma(d, o);
    gamma = r.gamma_hat;
    probe_info = probe_json(r, o);
    source = TripleSource::probe_frontier;
  } else {
    gamma = *a.gamma;
  }
  const SolutionTriple triple = solve_system(kappa, gamma);
  AdjustOptions ao;
  ao.native_scaling = a.native_scaling;
  if (a.lrt == "none") {
    ao.run_lrt = false;
  } else if (a.lrt != "all") {
    for (double v : parse_list(a.lrt)) {
      if (v < 0 || v >= static_cast<double>(d.p()) || v != std::floor(v)) {
        throw InvalidArgument("adjust: --lrt index " + std::to_string(v) + " out of range");
      }
      ao.lrt_coordinates.push_back(static_cast<Eigen::Index>(v));
    }
  }
  const AdjustedInference adj = adjust(d, fit, triple, source, ao);
  json coefs = json::array();
  for (Eigen::Index j = 0; j < d.p(); ++j) {
    coefs.push_back({{"index", j},
                     {"beta_hat", adj.beta_hat[j]},
                     {"beta_debiased", adj.beta_debiased[j]},
                     {"se_classical", adj.se_classical[j]},
                     {"se_corrected", adj.se_corrected[j]}});
  }
  json tests = json::array();
  for (std::size_t k = 0; k < adj.tested.size(); ++k) {
    tests.push_back({{"index", adj.tested[k]},
                     {"two_llr", adj.two_llr[k]},
                     {"p_classical", adj.pvalues_classical[k]},
                     {"p_adjusted", adj.pvalues[k]}});
  }
  json triple_j = triple_json(triple);
  triple_j["source"] = to_string(source);
  json j = {{"command", "adjust"},
            {"data", a.probe_args.data},
            {"n", d.n()},
            {"p", d.p()},
            {"kappa", kappa},
            {"native_scaling", a.native_scaling},
            {"lrt_factor", adj.lrt_factor},
            {"se_corrected_note", "null-coordinate standard deviation; heuristic for non-null coordinates"},
            {"triple", triple_j},
            {"coefficients", coefs},
            {"tests", tests}};
  if (a.probe) {
    j["probe"] = probe_info;
  }
  em.json_result(j);
  em.human() << "kappa " << fmt4(kappa) << "  gamma " << fmt4(gamma) << " (" << to_string(source)
             << ")\nalpha " << fmt4(triple.alpha_star) << "  sigma " << fmt4(triple.sigma_star)
             << "  LRT factor " << fmt4(adj.lrt_factor) << "  tests " << adj.tested.size() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset;
  std::string config;
  std::optional<int> replicates;
  std::optional<long> n;
  std::optional<long> p;
  std::optional<double> gamma;
  std::string pattern;
  std::string design;
  std::string out_dir;
  std::string emit_dataset;
  bool check = false;
};

int cmd_simulate(const SimulateArgs& a, const Globals& g, Emitter& em) {
  if (a.preset.empty() == a.config.empty()) {
    throw InvalidArgument("simulate: give exactly one of --preset or --config");
  }
  ExperimentConfig c = a.preset.empty() ? load_config(a.config) : preset(a.preset);
  if (a.replicates) {
    c.replicates = *a.replicates;
  }
  if (a.n) {
    c.n = *a.n;
  }
  if (a.p) {
    c.p = *a.p;
  }
  if (a.gamma) {
    c.gamma_target = *a.gamma;
  }
  if (!a.pattern.empty()) {
    c.beta_pattern = parse_beta_pattern(a.pattern);
  }
  if (!a.design.empty()) {
    c.design = parse_design_kind(a.design);
  }
  if (g.seed || std::getenv("HDLOGIT_SEED") != nullptr) {
    c.seed = g.resolved_seed();
  }
  c.workers = g.workers;
  c.probe.workers = g.workers;

  if (!a.emit_dataset.empty()) {
    detail::validate_config(c);
    const Eigen::VectorXd beta = detail::draw_beta(c, 0);
    Eigen::VectorXd alleles;
    if (c.design == DesignKind::snp) {
      Rng rng = make_rng(c.seed, 0, stream_tag::allele);
      alleles = default_allele_frequencies(c.p, rng);
    }
    const Dataset d = detail::draw_dataset(c, beta, alleles, 0);
    const bool binary = a.emit_dataset.size() > 4 &&
                        a.emit_dataset.substr(a.emit_dataset.size() - 4) == ".bin";
    save_dataset(a.emit_dataset, d, binary);
    em.json_result({{"command", "simulate"},
                    {"config", config_json(c)},
                    {"fingerprint", config_fingerprint(c)},
                    {"dataset", a.emit_dataset},
                    {"beta", vec_json(beta)}});
    em.human() << "wrote replicate 0 of '" << c.name << "' to " << a.emit_dataset << "\n";
    return kExitOk;
  }

  const ExperimentResult res = run_experiment(c);
  const std::vector<CheckOutcome> outcomes = evaluate_checks(res);
  json checks = json::array();
  bool all_pass = true;
  for (const CheckOutcome& o : outcomes) {
    checks.push_back({{"metric", o.check.metric},
                      {"target", o.check.target},
                      {"tolerance", o.check.tolerance},
                      {"value", o.value},
                      {"pass", o.pass}});
    all_pass = all_pass && o.pass;
  }
  json files = json::array();
  if (!a.out_dir.empty()) {
    std::filesystem::create_directories(a.out_dir);
    auto emit = [&](const std::string& name, auto writer) {
      std::ostringstream os;
      writer(os, res);
      write_text_file((std::filesystem::path(a.out_dir) / name).string(), os.str());
      files.push_back(name);
    };
    emit("replicates.csv", write_replicates_csv);
    emit("summary.csv", write_summary_csv);
    if (c.kind == ExperimentKind::mle) {
      emit("lrt.csv", write_lrt_csv);
      if (c.record_coefficients) {
        emit("coefficients.csv", write_coefficients_csv);
      }
    }
  }
  json j = {{"command", "simulate"},
            {"config", config_json(c)},
            {"fingerprint", res.fingerprint},
            {"triple", res.triple ? triple_json(*res.triple) : json(nullptr)},
            {"metrics", metric_map(res)},
            {"checks", checks},
            {"files", files}};
  if (!a.out_dir.empty()) {
    write_text_file((std::filesystem::path(a.out_dir) / "manifest.json").string(), j.dump(2) + "\n");
  }
  em.json_result(j);
  std::ostream& h = em.human();
  h << c.name << ": " << c.replicates << " replicates, n " << c.n << ", p " << c.p << "\n";
  for (const Metric& m : res.metrics) {
    h << "  " << m.name << " " << fmt4(m.value);
    if (std::isfinite(m.se) && m.se > 0.0) {
      h << " (" << fmt4(m.se) << ")";
    }
    h << "\n";
  }
  for (const CheckOutcome& o : outcomes) {
    h << "  check " << o.check.metric << " = " << fmt4(o.value) << " vs " << fmt4(o.check.target)
      << " +- " << fmt4(o.check.tolerance) << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
  }
  return a.check && !all_pass ? kExitFailure : kExitOk;
}

// --------------------------------------------------------------------------- amp-check

struct AmpArgs {
  std::string data;
  long n = 1000;
  long p = 100;
  double gamma = 1.0;
  std::string pattern = "iid_gauss(0,1)";
  int instances = 1;
  int max_iter = 200;
  std::string trajectory;
};

int cmd_amp(const AmpArgs& a, const Globals& g, Emitter& em) {
  const std::uint64_t seed = g.resolved_seed();
  json inst = json::array();
  double worst_diff = 0.0;
  double worst_grad = 0.0;
  bool all_converged = true;
  std::optional<SolutionTriple> triple;
  const int count = a.data.empty() ? a.instances : 1;
  for (int k = 0; k < count; ++k) {
    Dataset d;
    Eigen::VectorXd beta0;
    Eigen::VectorXd beta;
    if (a.data.empty()) {
      if (a.n < 2 || a.p < 1 || a.p >= a.n) {
        throw InvalidArgument("amp-check: need 1 <= p < n");
      }
      Rng brng = make_rng(seed, static_cast<std::uint64_t>(k), stream_tag::beta);
      beta = gen_beta(parse_beta_pattern(a.pattern), a.p, a.gamma, 1.0 / static_cast<double>(a.n), brng);
      Rng drng = make_rng(seed, static_cast<std::uint64_t>(k), stream_tag::data);
      d.X = gen_gaussian_design(a.n, a.p, drng);
      d.y = gen_response(d.X, beta, drng);
    } else {
      d = load_dataset(a.data);
      d.validate();
    }
    if (!triple) {
      triple = solve_system(static_cast<double>(d.p()) / static_cast<double>(d.n()), a.gamma);
    }
    if (a.data.empty()) {
      Rng arng = make_rng(seed, static_cast<std::uint64_t>(k), stream_tag::amp);
      beta0 = amp_calibrated_start(beta, *triple, arng);
    } else {
      beta0 = Eigen::VectorXd::Zero(d.p());
    }
    const FitResult fit = fit_mle(d);
    ensure_converged(fit);
    AmpOptions ao;
    ao.max_iter = a.max_iter;
    const AmpResult r = amp_run(d, *triple, beta0, ao, &fit.beta_hat);
    const AmpStep& last = r.trajectory.back();
    worst_diff = std::max(worst_diff, last.distance_to_mle);
    worst_grad = std::max(worst_grad, last.grad_norm);
    all_converged = all_converged && r.converged;
    json row = {{"instance", k},
                {"converged", r.converged},
                {"iterations", r.state.t},
                {"max_abs_diff_to_newton", last.distance_to_mle},
                {"grad_norm", last.grad_norm}};
    if (a.data.empty()) {
      row["bulk_mse"] = (r.state.beta_t - triple->alpha_star * beta).squaredNorm() / static_cast<double>(d.p());
    }
    inst.push_back(row);
    if (k == 0 && !a.trajectory.empty()) {
      std::ofstream f(a.trajectory);
      if (!f) {
        throw InvalidArgument("cannot write '" + a.trajectory + "'");
      }
      write_trajectory_csv(f, r);
    }
    em.human() << "instance " << k << ": " << (r.converged ? "converged" : "not converged") << " after "
               << r.state.t << " iterations, |beta_amp - beta_newton|_inf " << fmt4(last.distance_to_mle)
               << ", |grad|_inf " << fmt4(last.grad_norm) << "\n";
  }
  em.json_result({{"command", "amp-check"},
                  {"seed", seed},
                  {"triple", triple_json(*triple)},
                  {"instances", inst},
                  {"max_abs_diff_to_newton", worst_diff},
                  {"max_grad_norm", worst_grad},
                  {"all_converged", all_converged}});
  return all_converged ? kExitOk : kExitConvergence;
}

json error_json(const std::string& command, const std::string& kind, const std::string& msg, int code) {
  return {{"command", command}, {"error", {{"kind", kind}, {"message", msg}}}, {"exit_code", code}};
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"High-dimensional logistic regression: corrected MLE inference", "hdlogit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (fallback: HDLOGIT_SEED, then 0)");
  app.add_option("--workers", g.workers, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--output,-o", g.output, "Write the JSON result here instead of stdout");
  app.add_flag("--quiet,-q", g.quiet, "Suppress the human-readable summary");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Solve the (alpha, sigma, lambda) system");
  solve->add_option("--kappa", sa.kappa, "p/n ratio")->required();
  solve->add_option("--gamma", sa.gamma, "Signal strength")->required();
  solve->add_option("--quad-order", sa.quad_order, "Gauss-Hermite points per axis")->check(CLI::Range(2, 256));
  solve->add_option("--tol", sa.tol, "Residual tolerance");
  solve->add_option("--max-iter", sa.max_iter, "Iteration cap");

  BoundaryArgs ba;
  auto* boundary = app.add_subcommand("boundary", "Trace the MLE existence boundary");
  boundary->add_option("--gamma", ba.gammas, "Comma-separated gamma values");
  boundary->add_option("--gamma-range", ba.gamma_range, "start:stop:step");
  boundary->add_option("--kappa", ba.kappas, "Comma-separated kappa values (inverse map)");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit the logistic MLE to a dataset");
  fit->add_option("--data", fa.data, "CSV or HDLR1 binary dataset")->required();
  fit->add_flag("--check-separation", fa.check_separation, "Run the separation LP first");
  fit->add_option("--max-iter", fa.max_iter, "Newton iteration cap");
  fit->add_flag("--se", fa.se, "Also report plugin Fisher standard errors");

  ProbeArgs pa;
  auto* probe = app.add_subcommand("probe", "Estimate gamma with ProbeFrontier");
  auto add_probe_flags = [](CLI::App* sub, ProbeArgs& p) {
    sub->add_option("--data", p.data, "CSV or HDLR1 binary dataset")->required();
    sub->add_option("--B", p.B, "Subsamples per grid point")->check(CLI::PositiveNumber);
    sub->add_option("--grid-step", p.grid_step, "Kappa grid spacing");
    sub->add_option("--threshold", p.threshold, "Separation frequency level");
    sub->add_option("--scheme", p.scheme, "nested or independent");
    sub->add_flag("--coarse-to-fine", p.coarse_to_fine, "Scan at 0.01 then refine");
  };
  add_probe_flags(probe, pa);
  probe->add_option("--curve", pa.curve, "Write the (kappa, pi_hat) curve as CSV");

  AdjustArgs aa;
  auto* adj = app.add_subcommand("adjust", "Corrected inference for a dataset");
  add_probe_flags(adj, aa.probe_args);
  adj->add_option("--gamma", aa.gamma, "Known signal strength");
  adj->add_flag("--probe", aa.probe, "Estimate gamma with ProbeFrontier");
  adj->add_flag("--native-scaling", aa.native_scaling, "Assume column variance 1/n");
  adj->add_option("--lrt", aa.lrt, "all, none, or comma-separated coordinates");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  sim->add_option("--preset", ma.preset, "table1, table2, table3, table4 or snp");
  sim->add_option("--config", ma.config, "JSON experiment config");
  sim->add_option("--replicates", ma.replicates, "Override replicate count");
  sim->add_option("--n", ma.n, "Override n");
  sim->add_option("--p", ma.p, "Override p");
  sim->add_option("--gamma", ma.gamma, "Override gamma");
  sim->add_option("--pattern", ma.pattern, "Override beta pattern, e.g. half_const(10)");
  sim->add_option("--design", ma.design, "Override design: gaussian or snp");
  sim->add_option("--out-dir", ma.out_dir, "Directory for CSV tables and manifest.json");
  sim->add_option("--emit-dataset", ma.emit_dataset, "Write replicate 0 as a dataset and stop");
  sim->add_flag("--check", ma.check, "Exit 1 if any configured check fails");

  AmpArgs pa2;
  auto* amp = app.add_subcommand("amp-check", "Compare AMP with the Newton MLE");
  amp->add_option("--data", pa2.data, "Dataset (AMP then starts from zero)");
  amp->add_option("--n", pa2.n, "Rows of simulated instances");
  amp->add_option("--p", pa2.p, "Columns of simulated instances");
  amp->add_option("--gamma", pa2.gamma, "Signal strength");
  amp->add_option("--pattern", pa2.pattern, "Beta pattern");
  amp->add_option("--instances", pa2.instances, "Number of simulated instances")->check(CLI::PositiveNumber);
  amp->add_option("--max-iter", pa2.max_iter, "AMP iteration cap");
  amp->add_option("--trajectory", pa2.trajectory, "CSV trajectory of instance 0");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "hdlogit: " << e.what() << "\n" << "Run 'hdlogit --help' for usage.\n";
    return kExitUsage;
  }

  std::string command = "hdlogit";
  for (const auto* sub : app.get_subcommands()) {
    command = sub->get_name();
  }
  Emitter em(g, out, err);
  auto fail = [&](const std::string& kind, const std::exception& e, int code) {
    err << "hdlogit " << command << ": " << e.what() << "\n";
    try {
      em.json_result(error_json(command, kind, e.what(), code));
    } catch (const std::exception&) {
    }
    return code;
  };
  try {
    if (solve->parsed()) {
      return cmd_solve(sa, em);
    }
    if (boundary->parsed()) {
      return cmd_boundary(ba, em);
    }
    if (fit->parsed()) {
      return cmd_fit(fa, em);
    }
    if (probe->parsed()) {
      return cmd_probe(pa, g, em);
    }
    if (adj->parsed()) {
      return cmd_adjust(aa, g, em);
    }
    if (sim->parsed()) {
      return cmd_simulate(ma, g, em);
    }
    if (amp->parsed()) {
      return cmd_amp(pa2, g, em);
    }
  } catch (const OutsideExistenceRegion& e) {
    return fail("outside_region", e, kExitRegion);
  } catch (const NonConvergence& e) {
    return fail("nonconvergence", e, kExitConvergence);
  } catch (const Separated& e) {
    return fail("separated", e, kExitSeparation);
  } catch (const ProbeFailure& e) {
    return fail("probe_failure", e, kExitProbe);
  } catch (const ParseError& e) {
    return fail("parse_error", e, kExitUsage);
  } catch (const InvalidArgument& e) {
    return fail("usage", e, kExitUsage);
  } catch (const std::exception& e) {
    return fail("error", e, kExitFailure);
  }
  return kExitUsage;
}

} // namespace hdlogit::cli
