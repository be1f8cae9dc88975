#include "dictcert/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "dictcert/balancedness.hpp"
#include "dictcert/certificate.hpp"
#include "dictcert/errors.hpp"
#include "dictcert/matrix_io.hpp"
#include "dictcert/model.hpp"
#include "dictcert/parallel.hpp"
#include "dictcert/report_json.hpp"
#include "dictcert/rng.hpp"
#include "dictcert/tangent.hpp"
#include "dictcert/verify.hpp"

namespace dictcert {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kModule = "cli";

// Reads keys out of a JSON object and rejects whatever is left over.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError(kModule, where_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(kModule, where_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ValidationError(kModule, where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Json source_json(const InstanceSource& s) {
  Json j;
  j["instance"] = s.instance;
  j["n"] = s.n;
  j["m"] = s.m;
  j["k"] = s.k;
  j["p"] = s.p;
  j["kind"] = s.kind;
  j["incoherence"] = s.incoherence;
  return j;
}

void read_source(StrictObject& o, InstanceSource& s) {
  o.get("instance", s.instance);
  o.get("n", s.n);
  o.get("m", s.m);
  o.get("k", s.k);
  o.get("p", s.p);
  o.get("kind", s.kind);
  o.get("incoherence", s.incoherence);
}

GenConfig gen_from_json(const Json& j) {
  GenConfig c;
  StrictObject o(j, "gen");
  read_source(o, c.source);
  o.finish();
  return c;
}

CertifyConfig certify_from_json(const Json& j) {
  CertifyConfig c;
  StrictObject o(j, "certify");
  read_source(o, c.source);
  o.get("alpha", c.alpha);
  o.finish();
  return c;
}

BalanceConfig balance_from_json(const Json& j) {
  BalanceConfig c;
  StrictObject o(j, "balance");
  read_source(o, c.source);
  o.get("dense_check", c.dense_check);
  o.finish();
  return c;
}

SolveConfig solve_from_json(const Json& j) {
  SolveConfig c;
  StrictObject o(j, "solve");
  read_source(o, c.source);
  o.get("backend", c.backend);
  o.get("tol", c.tol);
  o.get("samples", c.samples);
  o.get("use_certificate", c.use_certificate);
  o.finish();
  return c;
}

LemmasConfig lemmas_from_json(const Json& j) {
  LemmasConfig c;
  StrictObject o(j, "lemmas");
  o.get("which", c.which);
  o.get("trials", c.trials);
  o.finish();
  return c;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(kModule, "cannot open config file " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(kModule, "config file " + path + " is not valid JSON: " + e.what());
  }
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  return out.parent_path() / (out.stem().string() + suffix);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(kModule, "cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError(kModule, "write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Instance acquire_instance(const InstanceSource& s, uint64_t seed) {
  if (!s.instance.empty()) return load_instance(s.instance);
  InstanceParams ip{s.m, s.n, s.p, s.k, parse_dictionary_kind(s.kind), seed};
  if (s.incoherence > 0.0) return gen_incoherent_instance(ip, s.incoherence, 100000);
  return gen_instance(ip);
}

Json instance_json(const Instance& inst) {
  Json j;
  j["n"] = inst.dict.cols();
  j["m"] = inst.dict.rows();
  j["p"] = inst.coeffs.p();
  j["k"] = inst.coeffs.k();
  j["seed"] = inst.seed;
  j["mu"] = number(inst.dict.mu());
  return j;
}

void add_source_options(CLI::App* app, InstanceSource& s) {
  app->add_option("--instance", s.instance, "Instance directory (A.mat, X.mat, Y.mat)");
  app->add_option("--n", s.n, "Number of atoms");
  app->add_option("--m", s.m, "Signal dimension");
  app->add_option("--k", s.k, "Nonzeros per column");
  app->add_option("--p", s.p, "Number of samples");
  app->add_option("--kind", s.kind, "Dictionary kind: gaussian_unit or orthonormal");
  app->add_option("--incoherence", s.incoherence,
                  "Resample until k mu(A) is below this value (0 disables)");
}

// Dense P_Omega T P_Omega assembled column by column from the operator.
double dense_xi_oracle(const Dictionary& a, const SparseCoeffs& x) {
  CoefficientOperators ops(a, x.dense());
  std::vector<Index> coords = support_coordinates(x.support());
  const Index dim = static_cast<Index>(coords.size());
  const Index n = x.n(), p = x.p();
  Matrix t(dim, dim);
  Matrix e = Matrix::Zero(n, p);
  for (Index c = 0; c < dim; ++c) {
    e(coords[c] % n, coords[c] / n) = 1.0;
    Matrix col = ops.apply_T(e);
    e(coords[c] % n, coords[c] / n) = 0.0;
    for (Index r = 0; r < dim; ++r) t(r, c) = col(coords[r] % n, coords[r] / n);
  }
  Eigen::JacobiSVD<Matrix> svd(t);
  return svd.singularValues().minCoeff();
}

struct Common {
  uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 0;
  bool assert_checks = false;
  std::string out;
};

int cmd_gen(const GenConfig& c, const Common& common) {
  Instance inst = acquire_instance(c.source, common.seed);
  fs::path dir = common.out.empty() ? fs::path("instance") : fs::path(common.out);
  save_instance(inst, dir);
  std::cout << "wrote instance to " << dir.string() << " (mu = " << fmt(inst.dict.mu()) << ")\n";
  return 0;
}

int cmd_certify(const CertifyConfig& c, const Common& common) {
  Instance inst = acquire_instance(c.source, common.seed);
  CertificateState st = build_certificate(inst.dict, inst.coeffs);
  double alpha = c.alpha;
  Json alpha_json = nullptr;
  if (!(alpha > 0.0)) {
    AlphaEstimate est = estimate_alpha(inst.dict, inst.coeffs);
    alpha_json = to_json(est);
    alpha = est.alpha;
  }
  if (!(alpha > 0.0)) {
    throw ConditioningError("balancedness", "balancedness constant is zero; cannot verify");
  }
  CertificateReport rep = verify_certificate(inst.dict, inst.coeffs, st.lambda, alpha);

  fs::path out = common.out.empty() ? fs::path("cert.json") : fs::path(common.out);
  Json j;
  j["instance"] = instance_json(inst);
  j["alpha_estimate"] = alpha_json;
  j["certificate"] = to_json(st);
  j["report"] = to_json(rep);
  write_json(out, j);

  std::string csv = "j,q_norm,offsup_inf,zeta_zero\n";
  for (const StepRecord& s : st.per_step) {
    csv += std::to_string(s.column) + "," + fmt(s.q_norm) + "," + fmt(s.offsup_inf) + "," +
           (s.zeta_zero ? "1" : "0") + "\n";
  }
  write_text(sibling(out, ".csv"), csv);
  ensure_parent(out);
  save_dlmat(sibling(out, "_lambda.mat"), st.lambda);
  std::cout << "certificate: interp_dev=" << fmt(rep.interp_dev) << " offsup_inf="
            << fmt(rep.offsup_inf) << " phi_norm=" << fmt(rep.phi_norm) << " alpha=" << fmt(alpha)
            << (rep.all() ? " [valid]" : " [invalid]") << "\n";
  return common.assert_checks && !rep.all() ? 3 : 0;
}

int cmd_balance(const BalanceConfig& c, const Common& common) {
  Instance inst = acquire_instance(c.source, common.seed);
  BalancednessReport rep = alpha_bound(inst.dict, inst.coeffs);
  Json j;
  j["instance"] = instance_json(inst);
  j["report"] = to_json(rep);
  bool ok = rep.chain_holds && rep.psi_sum_holds && rep.psi_bound_holds;
  if (c.dense_check) {
    Json d;
    const Index dim = static_cast<Index>(inst.coeffs.k()) * inst.coeffs.p();
    if (dim <= 2000) {
      double oracle = dense_xi_oracle(inst.dict, inst.coeffs);
      double diff = std::abs(oracle - rep.xi);
      d["xi_oracle"] = number(oracle);
      d["abs_diff"] = number(diff);
      d["ok"] = diff <= 1e-8 * std::max(1.0, oracle);
      ok = ok && diff <= 1e-8 * std::max(1.0, oracle);
    } else {
      d["skipped"] = "support dimension above 2000";
    }
    j["dense_check"] = d;
  }
  fs::path out = common.out.empty() ? fs::path("balance.json") : fs::path(common.out);
  write_json(out, j);
  std::cout << "xi=" << fmt(rep.xi) << " alpha=" << fmt(rep.alpha) << "\n";
  return common.assert_checks && !ok ? 3 : 0;
}

int cmd_solve(const SolveConfig& c, const Common& common) {
  Instance inst = acquire_instance(c.source, common.seed);
  OptimalityConfig oc;
  oc.solver.backend = parse_backend(c.backend);
  oc.solver.gap_tol = c.tol;
  oc.uniqueness_samples = c.samples;
  oc.use_certificate = c.use_certificate;
  oc.seed = derive_seed(common.seed, 7);
  OptimalityVerdict v = is_local_min(inst.dict, inst.coeffs, oc);
  Json j;
  j["instance"] = instance_json(inst);
  Json body = to_json(v);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  fs::path out = common.out.empty() ? fs::path("verdict.json") : fs::path(common.out);
  write_json(out, j);
  std::cout << "verdict=" << to_string(v.verdict) << " route=" << to_string(v.route) << "\n";
  return common.assert_checks && v.verdict != Verdict::certified_yes ? 3 : 0;
}

int cmd_phase(PhaseConfig c, const Common& common, const std::string& svg_path) {
  if (common.seed_given) c.seed = common.seed;
  std::vector<PhaseCell> cells = phase_transition_grid(c, resolve_jobs(common.jobs));
  std::string csv = "n,m,k,p,trials,success_frac,mean_aligned_err,mean_raw_err\n";
  for (const PhaseCell& cell : cells) {
    csv += std::to_string(cell.n) + "," + std::to_string(cell.m) + "," + std::to_string(cell.k) +
           "," + std::to_string(cell.p) + "," + std::to_string(cell.trials) + "," +
           fmt(cell.success_frac) + "," + fmt(cell.mean_aligned_err) + "," +
           fmt(cell.mean_raw_err) + "\n";
  }
  fs::path out = common.out.empty() ? fs::path("grid.csv") : fs::path(common.out);
  write_text(out, csv);
  if (!svg_path.empty()) write_text(svg_path, phase_svg(cells));

  bool ok = true;
  for (int n : c.n_list) {
    for (double ratio : c.ratio_list) {
      const int m = static_cast<int>(std::lround(ratio * n));
      std::vector<double> fr;
      double first = -1.0, half = -1.0;
      for (const PhaseCell& cell : cells) {
        if (cell.n != n || cell.m != m) continue;
        fr.push_back(cell.success_frac);
        if (cell.k == 1) first = cell.success_frac;
        if (cell.k == (n + 1) / 2) half = cell.success_frac;
        if (cell.failed_trials > 0) {
          std::cout << "cell n=" << n << " m=" << m << " k=" << cell.k << ": "
                    << cell.failed_trials << " failed trials (" << cell.first_error << ")\n";
        }
      }
      IsotonicCheck iso = isotonic_check(fr, c.trials);
      bool gap_ok = first >= 0.0 && half >= 0.0 && first - half >= 0.5;
      std::cout << "n=" << n << " m=" << m << ": success(k=1)=" << fmt(first)
                << " success(k=" << (n + 1) / 2 << ")=" << fmt(half)
                << " isotonic_max_dev=" << fmt(iso.max_deviation) << "\n";
      ok = ok && gap_ok && iso.holds;
    }
  }
  return common.assert_checks && !ok ? 3 : 0;
}

int cmd_lemmas(const LemmasConfig& c, const Common& common) {
  std::vector<std::string> which;
  if (c.which == "all") {
    which = lemma_names();
  } else {
    which.push_back(c.which);
  }
  const int jobs = resolve_jobs(common.jobs);
  std::vector<McReport> reports;
  for (const std::string& w : which) reports.push_back(run_lemma(w, c.trials, common.seed, jobs));

  std::string csv = "check,trials,estimate,bound,ci_halfwidth,violations,passed,seed\n";
  Json summary;
  Json checks = Json::array();
  bool all = true;
  for (const McReport& r : reports) {
    csv += r.name + "," + std::to_string(r.trials) + "," + fmt(r.estimate) + "," + fmt(r.bound) +
           "," + fmt(r.ci_halfwidth) + "," + std::to_string(r.violations) + "," +
           (r.passed ? "1" : "0") + "," + std::to_string(r.seed) + "\n";
    checks.push_back(to_json(r));
    all = all && r.passed;
    std::cout << r.name << ": " << (r.passed ? "pass" : "FAIL") << " estimate=" << fmt(r.estimate)
              << " bound=" << fmt(r.bound) << "\n";
  }
  summary["checks"] = checks;
  summary["all_passed"] = all;
  fs::path out = common.out.empty() ? fs::path("lemmas.csv") : fs::path(common.out);
  write_text(out, csv);
  write_json(sibling(out, ".json"), summary);
  return common.assert_checks && !all ? 3 : 0;
}

}  // namespace

Json to_json(const PhaseConfig& c) {
  Json j;
  j["n_list"] = c.n_list;
  j["ratio_list"] = c.ratio_list;
  j["k_list"] = c.k_list;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["p"] = c.p_override;
  j["kind"] = to_string(c.kind);
  j["init_radius"] = c.solve.init_radius;
  j["max_outer"] = c.solve.max_outer;
  j["backend"] = to_string(c.solve.solver.backend);
  return j;
}

PhaseConfig phase_config_from_json(const Json& j) {
  PhaseConfig c;
  StrictObject o(j, "phase");
  o.get("n_list", c.n_list);
  o.get("ratio_list", c.ratio_list);
  o.get("k_list", c.k_list);
  o.get("trials", c.trials);
  o.get("seed", c.seed);
  o.get("p", c.p_override);
  std::string kind = to_string(c.kind), backend = to_string(c.solve.solver.backend);
  o.get("kind", kind);
  o.get("init_radius", c.solve.init_radius);
  o.get("max_outer", c.solve.max_outer);
  o.get("backend", backend);
  o.finish();
  c.kind = parse_dictionary_kind(kind);
  c.solve.solver.backend = parse_backend(backend);
  return c;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["out"] = c.out;
  Json gen = source_json(c.gen.source);
  j["gen"] = gen;
  Json cert = source_json(c.certify.source);
  cert["alpha"] = c.certify.alpha;
  j["certify"] = cert;
  Json bal = source_json(c.balance.source);
  bal["dense_check"] = c.balance.dense_check;
  j["balance"] = bal;
  Json sol = source_json(c.solve.source);
  sol["backend"] = c.solve.backend;
  sol["tol"] = c.solve.tol;
  sol["samples"] = c.solve.samples;
  sol["use_certificate"] = c.solve.use_certificate;
  j["solve"] = sol;
  j["phase"] = to_json(c.phase);
  j["lemmas"] = {{"which", c.lemmas.which}, {"trials", c.lemmas.trials}};
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  StrictObject o(j, "config");
  o.get("command", c.command);
  o.get("seed", c.seed);
  o.get("out", c.out);
  if (const Json* s = o.sub("gen")) c.gen = gen_from_json(*s);
  if (const Json* s = o.sub("certify")) c.certify = certify_from_json(*s);
  if (const Json* s = o.sub("balance")) c.balance = balance_from_json(*s);
  if (const Json* s = o.sub("solve")) c.solve = solve_from_json(*s);
  if (const Json* s = o.sub("phase")) c.phase = phase_config_from_json(*s);
  if (const Json* s = o.sub("lemmas")) c.lemmas = lemmas_from_json(*s);
  o.finish();
  return c;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Local optimality certificates for sparse dictionary learning"};
  app.require_subcommand(1);
  RunConfig cfg;
  Common common;
  std::string svg_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Master seed");
    sub->add_option("--jobs", common.jobs, "Worker threads (default: DICTCERT_JOBS or 1)");
    sub->add_option("--out", common.out, "Output path");
    sub->add_flag("--assert", common.assert_checks, "Exit 3 when the acceptance check fails");
  };

  // --config is applied while parsing; explicit flags are stored afterwards
  // and therefore take precedence.
  auto add_config = [&](CLI::App* sub, auto loader) {
    sub->add_option_function<std::string>(
           "--config", [loader](const std::string& path) { loader(load_json_file(path)); },
           "JSON parameter record for this subcommand")
        ->trigger_on_parse();
  };

  CLI::App* gen = app.add_subcommand("gen", "Generate and save an instance");
  add_config(gen, [&](const Json& j) { cfg.gen = gen_from_json(j); });
  add_source_options(gen, cfg.gen.source);
  add_common(gen);

  CLI::App* certify = app.add_subcommand("certify", "Build and verify a dual certificate");
  add_config(certify, [&](const Json& j) { cfg.certify = certify_from_json(j); });
  add_source_options(certify, cfg.certify.source);
  certify->add_option("--alpha", cfg.certify.alpha, "Balancedness constant (0: estimate)");
  add_common(certify);

  CLI::App* balance = app.add_subcommand("balance", "Balancedness diagnostics");
  add_config(balance, [&](const Json& j) { cfg.balance = balance_from_json(j); });
  add_source_options(balance, cfg.balance.source);
  balance->add_flag("--dense-check", cfg.balance.dense_check,
                    "Cross-check xi against a dense assembly");
  add_common(balance);

  CLI::App* solve = app.add_subcommand("solve", "Decide local optimality of the generating pair");
  add_config(solve, [&](const Json& j) { cfg.solve = solve_from_json(j); });
  add_source_options(solve, cfg.solve.source);
  solve->add_option("--backend", cfg.solve.backend, "lp or pd");
  solve->add_option("--tol", cfg.solve.tol, "Relative duality gap tolerance");
  solve->add_option("--samples", cfg.solve.samples, "Random directions for the sharpness margin");
  add_common(solve);

  CLI::App* phase = app.add_subcommand("phase", "Phase transition grid");
  add_config(phase, [&](const Json& j) { cfg.phase = phase_config_from_json(j); });
  phase->add_option("--svg", svg_path, "Write a grayscale heatmap");
  add_common(phase);

  CLI::App* lemmas = app.add_subcommand("lemmas", "Monte Carlo checks of the probabilistic lemmas");
  add_config(lemmas, [&](const Json& j) { cfg.lemmas = lemmas_from_json(j); });
  std::vector<std::string> choices = lemma_names();
  choices.push_back("all");
  lemmas->add_option("--which", cfg.lemmas.which, "Check to run")
      ->check(CLI::IsMember(choices));
  lemmas->add_option("--trials", cfg.lemmas.trials, "Trials per check");
  add_common(lemmas);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dynamic_cast<const NumericalError*>(&e) ? 2 : 1;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->get_option("--seed")->count() > 0) common.seed_given = true;
  }

  try {
    if (gen->parsed()) return cmd_gen(cfg.gen, common);
    if (certify->parsed()) return cmd_certify(cfg.certify, common);
    if (balance->parsed()) return cmd_balance(cfg.balance, common);
    if (solve->parsed()) return cmd_solve(cfg.solve, common);
    if (phase->parsed()) return cmd_phase(cfg.phase, common, svg_path);
    if (lemmas->parsed()) {
      if (cfg.lemmas.trials < 1) throw ValidationError("verify", "trials must be at least 1");
      return cmd_lemmas(cfg.lemmas, common);
    }
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [cli] " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dictcert
