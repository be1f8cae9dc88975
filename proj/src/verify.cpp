#include "dictcert/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dictcert/balancedness.hpp"
#include "dictcert/certificate.hpp"
#include "dictcert/errors.hpp"
#include "dictcert/parallel.hpp"
#include "dictcert/rng.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "verify";
constexpr double kZ = 1.959963984540054;

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(kModule, what);
}

void check_trials(int trials) { require(trials >= 1, "trials must be at least 1"); }

void check_model(int n, int p, int k) {
  require(n >= 1, "n must be positive");
  require(p >= 1, "p must be positive");
  require(k >= 1 && k <= n, "k must lie in [1, n]");
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

int count_true(const std::vector<char>& v) {
  int c = 0;
  for (char b : v) c += b ? 1 : 0;
  return c;
}

double sym_norm(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// ||x^i restricted to Omega^a||^2 for every a.
Vector row_masses(const SparseCoeffs& x, int i) {
  const SupportPattern& s = x.support();
  Vector d = Vector::Zero(s.n());
  for (int j : s.row(i)) {
    double v = x.dense()(i, j);
    for (int a : s.col(j)) d(a) += v * v;
  }
  return d;
}

bool row_event(const SparseCoeffs& x, int i) {
  const double limit = 2.0 * std::sqrt(static_cast<double>(x.k()) / x.n());
  Vector d = row_masses(x, i);
  for (int a = 0; a < x.n(); ++a) {
    if (a != i && std::sqrt(d(a)) > limit) return false;
  }
  return x.dense().row(i).norm() <= 2.0;
}

}  // namespace

double McReport::metric(const std::string& key) const {
  for (const auto& [k, v] : metrics) {
    if (k == key) return v;
  }
  throw ValidationError(kModule, "report " + name + " has no metric '" + key + "'");
}

double frequency_halfwidth(int successes, int trials) {
  check_trials(trials);
  const double n = trials;
  const double ph = successes / n;
  if (successes >= 5 && trials - successes >= 5) return kZ * std::sqrt(ph * (1.0 - ph) / n);
  const double z2 = kZ * kZ;
  const double center = (ph + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = kZ / (1.0 + z2 / n) * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n));
  return std::max(ph - (center - half), center + half - ph);
}

double mean_halfwidth(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  const double mu = mean(samples);
  double ss = 0.0;
  for (double x : samples) ss += (x - mu) * (x - mu);
  return kZ * std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

McReport mc_eig_event(int n, int p, int k, double t, int trials, uint64_t seed,
                      double min_frequency, int jobs) {
  check_model(n, p, k);
  check_trials(trials);
  require(t > 0.0 && t <= 0.5, "t must lie in (0, 1/2]");
  std::vector<double> dev(static_cast<std::size_t>(trials));
  std::vector<Matrix> gram(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t i) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(seed, i));
    gram[i] = x.dense() * x.dense().transpose();
    dev[i] = sym_norm(gram[i] - Matrix::Identity(n, n));
  });
  Matrix mean_gram = Matrix::Zero(n, n);
  std::vector<char> hit(dev.size());
  for (std::size_t i = 0; i < dev.size(); ++i) {
    mean_gram += gram[i];
    hit[i] = dev[i] < t;
  }
  mean_gram /= trials;
  McReport r;
  r.name = "eig";
  r.trials = trials;
  r.seed = seed;
  int hits = count_true(hit);
  r.estimate = static_cast<double>(hits) / trials;
  r.bound = min_frequency;
  r.ci_halfwidth = frequency_halfwidth(hits, trials);
  r.passed = r.estimate + r.ci_halfwidth >= r.bound;
  r.metrics = {{"t", t},
               {"mean_deviation", mean(dev)},
               {"max_deviation", *std::max_element(dev.begin(), dev.end())},
               {"mean_gram_entry_dev", (mean_gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff()}};
  return r;
}

McReport mc_support_regularity(int n, int p, int k, int trials, uint64_t seed, int jobs) {
  check_model(n, p, k);
  check_trials(trials);
  std::vector<char> in_o(static_cast<std::size_t>(trials));
  std::vector<double> row_size(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t i) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(seed, i));
    in_o[i] = is_desirable_support(x.support()).in_O;
    row_size[i] = static_cast<double>(x.support().row(0).size());
  });
  McReport r;
  r.name = "supports";
  r.trials = trials;
  r.seed = seed;
  int hits = count_true(in_o);
  r.estimate = static_cast<double>(hits) / trials;
  const double nn = n, kk = k;
  r.bound = std::max(0.0, 1.0 - nn * nn * std::exp(-p * kk * kk / (10.0 * nn * nn)));
  r.ci_halfwidth = frequency_halfwidth(hits, trials);
  r.passed = r.estimate + r.ci_halfwidth >= r.bound;
  r.metrics = {{"mean_row0_size", mean(row_size)},
               {"expected_row_size", p * kk / nn},
               {"row_size_ci", mean_halfwidth(row_size)}};
  return r;
}

McReport mc_row_events(int n, int p, int k, int trials, uint64_t seed, int jobs) {
  check_model(n, p, k);
  check_trials(trials);
  // 0 = support not desirable, 1 = event fails, 2 = event holds.
  std::vector<int> outcome(static_cast<std::size_t>(trials));
  std::vector<int> row_violations(static_cast<std::size_t>(trials));
  std::vector<double> max_row_mass(static_cast<std::size_t>(trials));
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(seed, t));
    if (!is_desirable_support(x.support()).in_O) return;
    bool all = true;
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      all = all && row_event(x, i);
      // Expected ||x^i||^2 given Omega.
      double expected = static_cast<double>(x.support().row(i).size()) * n / (double(k) * p);
      worst = std::max(worst, expected);
      if (expected > 1.5 + 1e-12) ++row_violations[t];
    }
    max_row_mass[t] = worst;
    outcome[t] = all ? 2 : 1;
  });
  int cond = 0, hits = 0, viol = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < outcome.size(); ++t) {
    if (outcome[t] == 0) continue;
    ++cond;
    hits += outcome[t] == 2;
    viol += row_violations[t];
    worst = std::max(worst, max_row_mass[t]);
  }
  McReport r;
  r.name = "rows";
  r.trials = trials;
  r.seed = seed;
  const double nn = n, kk = k;
  r.bound = std::max(0.0, 1.0 - nn * nn * std::exp(-kk * kk * p / (4.0 * nn * nn)));
  r.violations = viol;
  if (cond > 0) {
    r.estimate = static_cast<double>(hits) / cond;
    r.ci_halfwidth = frequency_halfwidth(hits, cond);
  }
  r.passed = cond > 0 && viol == 0 && r.estimate + r.ci_halfwidth >= r.bound;
  r.metrics = {{"conditioned_trials", static_cast<double>(cond)},
               {"max_expected_row_energy", worst}};
  return r;
}

McReport mc_psi_bound(const Dictionary& a, int p, int k, int trials, uint64_t seed, int jobs) {
  const int n = static_cast<int>(a.cols());
  check_model(n, p, k);
  check_trials(trials);
  const double bound = 4.0 * k / n + 24.0 * k * a.mu();
  const double k_mu = k * a.mu();
  std::vector<int> psi_viol(static_cast<std::size_t>(trials)), gram_viol(psi_viol.size());
  std::vector<int> events(psi_viol.size());
  std::vector<double> worst(psi_viol.size());
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(seed, t));
    for (int i = 0; i < n; ++i) {
      if (!row_event(x, i)) continue;
      ++events[t];
      double norm = PsiTerm(a, x, i).norm();
      worst[t] = std::max(worst[t], norm / bound);
      if (norm > bound * (1.0 + 1e-9)) ++psi_viol[t];
    }
    // Incoherence consequences on every column support.
    for (int j = 0; j < p; ++j) {
      GramSubmatrixReport g = gram_submatrix_report(a, x.support().col(j));
      bool ok = g.upper_holds && g.lower_holds;
      if (k_mu < 0.5) ok = ok && g.inverse_holds && g.neumann_holds;
      if (!ok) ++gram_viol[t];
    }
  });
  McReport r;
  r.name = "psi";
  r.trials = trials;
  r.seed = seed;
  r.bound = bound;
  int pv = 0, gv = 0, ev = 0;
  double w = 0.0;
  for (std::size_t t = 0; t < psi_viol.size(); ++t) {
    pv += psi_viol[t];
    gv += gram_viol[t];
    ev += events[t];
    w = std::max(w, worst[t]);
  }
  r.estimate = w * bound;
  r.violations = pv + gv;
  r.passed = r.violations == 0 && ev > 0;
  r.metrics = {{"conditioned_rows", static_cast<double>(ev)},
               {"psi_violations", static_cast<double>(pv)},
               {"gram_violations", static_cast<double>(gv)},
               {"max_ratio", w},
               {"k_mu", k_mu}};
  return r;
}

McReport mc_decoupling(const Matrix& m, int k, int trials, uint64_t seed, int jobs) {
  require(m.rows() == m.cols() && m.rows() >= 1, "M must be square");
  const int n = static_cast<int>(m.rows());
  require(k >= 1 && k <= n, "k must lie in [1, n]");
  check_trials(trials);
  for (int i = 0; i < n; ++i) {
    require(m(i, i) == 0.0, "M must have zero diagonal (entry " + std::to_string(i) + ")");
  }
  std::vector<double> lhs(static_cast<std::size_t>(trials)), rhs(lhs.size());
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    std::vector<int> omega = sample_k_subset(n, k, rng);
    Matrix cols = select_columns(m, omega);
    rhs[t] = cols.norm();
    double s = 0.0;
    for (int a : omega) {
      for (std::size_t b = 0; b < omega.size(); ++b) s += cols(a, static_cast<Index>(b)) * cols(a, static_cast<Index>(b));
    }
    lhs[t] = std::sqrt(s);
  });
  McReport r;
  r.name = "decouple";
  r.trials = trials;
  r.seed = seed;
  const double factor = 16.0 * std::sqrt(static_cast<double>(k) / n);
  r.estimate = mean(lhs);
  r.bound = factor * mean(rhs);
  r.ci_halfwidth = mean_halfwidth(lhs) + factor * mean_halfwidth(rhs);
  r.passed = r.estimate - r.ci_halfwidth <= r.bound;
  r.metrics = {{"mean_lhs", r.estimate},
               {"mean_rhs", mean(rhs)},
               {"ratio", r.bound > 0.0 ? r.estimate / r.bound : 0.0}};
  return r;
}

McReport mc_khintchine(const Matrix& m, double sigma, int trials, uint64_t seed, int jobs) {
  require(sigma > 0.0, "sigma must be positive");
  require(m.cols() >= 1, "M must have at least one column");
  check_trials(trials);
  std::vector<double> norms(static_cast<std::size_t>(trials)), sign_moment(norms.size());
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    Vector v(m.cols());
    for (Index i = 0; i < v.size(); ++i) v(i) = sigma * rng.normal();
    norms[t] = (m * v).norm();
    // E[sign(v_i) v_i] / sigma averaged over coordinates.
    sign_moment[t] = v.cwiseAbs().mean() / sigma;
  });
  McReport r;
  r.name = "khintchine";
  r.trials = trials;
  r.seed = seed;
  const double fro = m.norm();
  const double lower = sigma * fro / std::sqrt(std::numbers::pi);
  const double c1 = std::sqrt(2.0 / std::numbers::pi);
  r.estimate = mean(norms);
  r.bound = sigma * fro;
  r.ci_halfwidth = mean_halfwidth(norms);
  const double c1_est = mean(sign_moment), c1_ci = mean_halfwidth(sign_moment);
  const bool upper_ok = r.estimate - r.ci_halfwidth <= r.bound;
  const bool lower_ok = r.estimate + r.ci_halfwidth >= lower;
  // Two-sided equality test, so use the 99.9% interval.
  const bool c1_ok = std::abs(c1_est - c1) <= c1_ci * (3.2905267314919 / kZ) + 1e-12;
  r.passed = upper_ok && lower_ok && c1_ok;
  r.metrics = {{"lower_bound", lower}, {"c1_estimate", c1_est}, {"c1_ci", c1_ci}, {"c1", c1}};
  return r;
}

McReport mc_chernoff_demo(int dim, int summands, double b, int trials, uint64_t seed, int jobs) {
  require(dim >= 1, "dimension must be positive");
  require(summands >= 1, "summands must be positive");
  require(b > 0.0, "B must be positive");
  check_trials(trials);
  // M_i = B u u^T with u uniform on the sphere: lambda_max(M_i) = B and
  // E[sum] = (summands B / dim) I.
  const double mu_max = summands * b / dim;
  std::vector<double> top(static_cast<std::size_t>(trials));
  std::vector<Matrix> sums(top.size());
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    Matrix s = Matrix::Zero(dim, dim);
    Vector u(dim);
    for (int i = 0; i < summands; ++i) {
      for (int d = 0; d < dim; ++d) u(d) = rng.normal();
      u.normalize();
      s.noalias() += b * u * u.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    top[t] = eig.eigenvalues().maxCoeff();
    sums[t] = std::move(s);
  });
  Matrix mean_sum = Matrix::Zero(dim, dim);
  for (const Matrix& s : sums) mean_sum += s;
  mean_sum /= trials;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(mean_sum, Eigen::EigenvaluesOnly);
  const double mu_mc = eig.eigenvalues().maxCoeff();

  McReport r;
  r.name = "chernoff";
  r.trials = trials;
  r.seed = seed;
  r.passed = true;
  double worst_slack = -1e300;
  for (double t : {0.25, 0.5, 1.0}) {
    int hits = 0;
    for (double v : top) hits += v >= (1.0 + t) * mu_max;
    const double freq = static_cast<double>(hits) / trials;
    const double ci = frequency_halfwidth(hits, trials);
    const double bound = dim * std::exp(-t * t * mu_max / (4.0 * b));
    if (freq - ci > bound) r.passed = false;
    if (freq - bound > worst_slack) {
      worst_slack = freq - bound;
      r.estimate = freq;
      r.bound = bound;
      r.ci_halfwidth = ci;
    }
    r.metrics.emplace_back("tail_" + std::to_string(t).substr(0, 4), freq);
    r.metrics.emplace_back("bound_" + std::to_string(t).substr(0, 4), bound);
  }
  r.metrics.emplace_back("mu_max", mu_max);
  r.metrics.emplace_back("mu_max_mc", mu_mc);
  r.metrics.emplace_back("mean_lambda_max", mean(top));
  return r;
}

McReport mc_q_scaling(int m, int n, int k, const std::vector<int>& p_grid, int trials,
                      uint64_t seed, DictionaryKind kind, int jobs,
                      std::vector<QScalingPoint>* points) {
  require(m >= 1, "m must be positive");
  require(p_grid.size() >= 2, "p_grid needs at least two values");
  check_trials(trials);
  for (int p : p_grid) check_model(n, p, k);
  if (kind == DictionaryKind::orthonormal) require(m == n, "orthonormal dictionaries need m = n");

  const std::size_t cells = p_grid.size() * static_cast<std::size_t>(trials);
  std::vector<double> q(cells), tau(cells);
  parallel_for(cells, jobs, [&](std::size_t c) {
    const std::size_t g = c / static_cast<std::size_t>(trials);
    const std::size_t t = c % static_cast<std::size_t>(trials);
    InstanceParams ip{m, n, p_grid[g], k, kind, derive_seed(derive_seed(seed, g), t)};
    Instance inst = gen_instance(ip);
    PassResult pass = golfing_pass(inst.dict, inst.coeffs, 0, ip.p, 1.0);
    q[c] = pass.q_trajectory[static_cast<std::size_t>(pass.t_star)];
    double e = 0.0;
    for (const StepRecord& s : pass.steps) e += s.energy;
    tau[c] = e / static_cast<double>(pass.steps.size());
  });

  std::vector<QScalingPoint> pts;
  std::vector<double> lx, ly;
  for (std::size_t g = 0; g < p_grid.size(); ++g) {
    std::vector<double> qs(q.begin() + static_cast<long>(g * trials),
                           q.begin() + static_cast<long>((g + 1) * trials));
    std::vector<double> ts(tau.begin() + static_cast<long>(g * trials),
                           tau.begin() + static_cast<long>((g + 1) * trials));
    QScalingPoint pt;
    pt.p = p_grid[g];
    pt.mean_q = mean(qs);
    pt.tau_ratio = mean(ts) * pt.p / (double(k) * n);
    pts.push_back(pt);
    lx.push_back(std::log(static_cast<double>(pt.p)));
    ly.push_back(std::log(pt.mean_q));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t g = 0; g < lx.size(); ++g) {
    sxy += (lx[g] - mx) * (ly[g] - my);
    sxx += (lx[g] - mx) * (lx[g] - mx);
  }
  double tau_lo = 1e300, tau_hi = 0.0;
  for (const auto& pt : pts) {
    tau_lo = std::min(tau_lo, pt.tau_ratio);
    tau_hi = std::max(tau_hi, pt.tau_ratio);
  }
  McReport r;
  r.name = "qscale";
  r.trials = trials;
  r.seed = seed;
  r.estimate = sxx > 0.0 ? sxy / sxx : 0.0;
  r.bound = -0.5;
  r.ci_halfwidth = 0.2;
  const double spread = tau_lo > 0.0 ? tau_hi / tau_lo : 1e300;
  r.passed = std::abs(r.estimate - r.bound) <= r.ci_halfwidth && spread <= 2.0;
  r.metrics = {{"tau_spread", spread}};
  for (const auto& pt : pts) {
    r.metrics.emplace_back("mean_q_p" + std::to_string(pt.p), pt.mean_q);
  }
  if (points) *points = std::move(pts);
  return r;
}

McReport mc_truncation_check(int n, int p, int k, double beta, int trials, uint64_t seed,
                             int jobs) {
  check_model(n, p, k);
  check_trials(trials);
  require(beta > 0.0, "beta must be positive");
  require(p >= 2, "p must be at least 2");
  const double radius = (1.0 + beta) * std::sqrt(n * std::log(static_cast<double>(p)) / p);
  std::vector<char> exceed(static_cast<std::size_t>(trials));
  std::vector<double> fourth(exceed.size());
  parallel_for(static_cast<std::size_t>(trials), jobs, [&](std::size_t t) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(seed, t));
    double worst = 0.0, m4 = 0.0;
    for (int j = 0; j < p; ++j) {
      double sq = x.dense().col(j).squaredNorm();
      worst = std::max(worst, sq);
      m4 += sq * sq;
    }
    exceed[t] = std::sqrt(worst) > radius;
    fourth[t] = m4 / p;
  });
  const double sigma = model_sigma(n, p, k);
  const double s4 = std::pow(sigma, 4);
  const double exact = (double(k) * k + 2.0 * k) * s4;
  const double claimed = 3.0 * double(n) * n / (double(p) * p);
  const double m4 = mean(fourth), m4_ci = mean_halfwidth(fourth);

  McReport r;
  r.name = "trunc";
  r.trials = trials;
  r.seed = seed;
  int hits = count_true(exceed);
  r.estimate = static_cast<double>(hits) / trials;
  r.bound = std::min(1.0, std::pow(static_cast<double>(p), 1.0 - beta * beta / 2.0));
  r.ci_halfwidth = frequency_halfwidth(hits, trials);
  const bool tail_ok = r.estimate - r.ci_halfwidth <= r.bound;
  const bool moment_ok = m4 - m4_ci <= claimed && std::abs(m4 - exact) <= 0.05 * exact;
  r.passed = tail_ok && moment_ok;
  r.metrics = {{"fourth_moment", m4},
               {"fourth_moment_ci", m4_ci},
               {"fourth_moment_exact", exact},
               {"fourth_moment_claimed", claimed},
               {"radius", radius}};
  return r;
}

const std::vector<std::string>& lemma_names() {
  static const std::vector<std::string> names{"eig",        "supports", "rows",
                                              "psi",        "decouple", "khintchine",
                                              "chernoff",   "qscale",   "trunc"};
  return names;
}

McReport run_lemma(const std::string& which, int trials, uint64_t seed, int jobs) {
  const auto& names = lemma_names();
  auto it = std::find(names.begin(), names.end(), which);
  require(it != names.end(), "unknown lemma check '" + which + "'");
  const uint64_t s = derive_seed(seed, static_cast<uint64_t>(it - names.begin()));
  if (which == "eig") return mc_eig_event(8, 2000, 2, 0.5, trials, s, 0.99, jobs);
  if (which == "supports") return mc_support_regularity(32, 4096, 4, trials, s, jobs);
  if (which == "rows") return mc_row_events(16, 2048, 2, trials, s, jobs);
  if (which == "psi") {
    Dictionary a = gen_dictionary(16, 16, DictionaryKind::gaussian_unit, derive_seed(s, 1u << 20));
    return mc_psi_bound(a, 1024, 2, trials, s, jobs);
  }
  if (which == "decouple" || which == "khintchine") {
    const int dim = which == "decouple" ? 16 : 8;
    Rng rng(derive_seed(s, 1u << 20));
    Matrix m(dim, dim);
    for (Index j = 0; j < dim; ++j) {
      for (Index i = 0; i < dim; ++i) m(i, j) = rng.normal();
    }
    if (which == "khintchine") return mc_khintchine(m, 1.0, trials, s, jobs);
    m.diagonal().setZero();
    return mc_decoupling(m, 4, trials, s, jobs);
  }
  if (which == "chernoff") return mc_chernoff_demo(8, 64, 1.0, trials, s, jobs);
  if (which == "qscale") {
    return mc_q_scaling(16, 16, 2, {250, 500, 1000, 2000}, std::min(trials, 50), s,
                        DictionaryKind::orthonormal, jobs);
  }
  return mc_truncation_check(16, 1024, 2, 4.0, trials, s, jobs);
}

}  // namespace dictcert
