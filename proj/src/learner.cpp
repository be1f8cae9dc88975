#include "dictcert/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "dictcert/errors.hpp"
#include "dictcert/parallel.hpp"
#include "dictcert/rng.hpp"
#include "dictcert/simplex.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "learner";

Vector basis_pursuit(const Matrix& a, const Vector& y) {
  const Index m = a.rows(), n = a.cols();
  LpProblem lp;
  lp.a.resize(m, 2 * n);
  lp.a << a, -a;
  lp.b = y;
  lp.c = Vector::Ones(2 * n);
  lp.lower = Vector::Zero(2 * n);
  lp.upper = Vector::Constant(2 * n, std::numeric_limits<double>::infinity());
  LpResult res = solve_lp(lp);
  if (res.status == LpStatus::infeasible) {
    throw InfeasibleError(kModule, "observation column is not in the range of A");
  }
  if (res.status != LpStatus::optimal) {
    throw NumericalError(kModule, std::string("basis pursuit LP ended with status ") +
                                      to_string(res.status));
  }
  return res.x.head(n) - res.x.tail(n);
}

}  // namespace

const char* to_string(LearnStatus s) {
  switch (s) {
    case LearnStatus::converged: return "converged";
    case LearnStatus::stationary: return "stationary";
    case LearnStatus::max_outer: return "max_outer";
  }
  return "unknown";
}

Matrix sparse_code(const Dictionary& a, const Matrix& y) {
  if (y.rows() != a.rows()) throw ValidationError(kModule, "Y must have m rows");
  const Matrix& am = a.entries();
  Matrix x;
  if (a.rows() == a.cols()) {
    Eigen::FullPivLU<Matrix> lu(am);
    if (!lu.isInvertible()) throw InfeasibleError(kModule, "square dictionary is singular");
    x = lu.solve(y);
  } else {
    x.resize(a.cols(), y.cols());
    for (Index j = 0; j < y.cols(); ++j) x.col(j) = basis_pursuit(am, y.col(j));
  }
  double scale = std::max(1.0, y.norm());
  if ((am * x - y).norm() > 1e-9 * scale) {
    throw InfeasibleError(kModule, "sparse coding residual too large; Y not in range of A");
  }
  return x;
}

LearnResult local_solve(const Matrix& y, const Dictionary& a0, const SolveParams& params) {
  if (params.init_radius < 0.0) throw ValidationError(kModule, "init_radius must be nonnegative");
  if (params.max_outer < 1) throw ValidationError(kModule, "max_outer must be at least 1");
  if (params.plateau_window < 0 || !(params.plateau_tol >= 0.0)) {
    throw ValidationError(kModule, "plateau_window and plateau_tol must be nonnegative");
  }
  if (y.rows() != a0.rows()) throw ValidationError(kModule, "Y must have m rows");

  LearnResult out;
  Dictionary a = a0;
  Matrix x = sparse_code(a, y);
  double obj = x.lpNorm<1>();
  out.trace.push_back(obj);
  int stalls = 0;
  out.status = LearnStatus::max_outer;
  for (int it = 0; it < params.max_outer; ++it) {
    out.outer_iterations = it + 1;
    if (obj == 0.0) {
      out.status = LearnStatus::converged;
      break;
    }
    LinearizedSolution lin = solve_linearized(a, x, params.solver);
    if (obj - lin.objective <= params.inner_tol * obj) {
      out.status = LearnStatus::converged;
      break;
    }
    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h <= params.max_halvings; ++h, t *= 0.5) {
      std::optional<Dictionary> trial;
      Matrix xt;
      try {
        trial.emplace(Dictionary::normalized(a.entries() + t * lin.pert.delta_a));
        xt = sparse_code(*trial, y);
      } catch (const Error&) {
        continue;
      }
      double ot = xt.lpNorm<1>();
      if (ot < obj) {
        stalls = (obj - ot <= params.inner_tol * obj) ? stalls + 1 : 0;
        a = std::move(*trial);
        x = std::move(xt);
        obj = ot;
        out.trace.push_back(obj);
        accepted = true;
        break;
      }
    }
    const std::size_t w = static_cast<std::size_t>(params.plateau_window);
    const bool plateau = w > 0 && out.trace.size() > w &&
                         out.trace[out.trace.size() - 1 - w] - obj <= params.plateau_tol * obj;
    if (!accepted || stalls >= params.stall_limit || plateau) {
      out.status = LearnStatus::stationary;
      break;
    }
  }
  out.a_hat = a.entries();
  out.x_hat = std::move(x);
  return out;
}

std::vector<int> max_weight_assignment(const Matrix& weight) {
  if (weight.rows() != weight.cols()) throw ValidationError(kModule, "assignment needs a square matrix");
  const int n = static_cast<int>(weight.rows());
  // Hungarian algorithm on cost = -weight, 1-based potentials.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = -weight(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> result(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) result[static_cast<std::size_t>(match[j] - 1)] = j - 1;
  return result;
}

Alignment align_sign_permutation(const Matrix& a_hat, const Matrix& a_true) {
  if (a_hat.rows() != a_true.rows() || a_hat.cols() != a_true.cols()) {
    throw ValidationError(kModule, "alignment needs matrices of the same shape");
  }
  const double ref = a_true.norm();
  if (!(ref > 0.0)) throw ValidationError(kModule, "reference dictionary is zero");
  Matrix corr = a_true.transpose() * a_hat;  // (i, j) = <A_i, A_hat_j>
  Alignment out;
  out.perm = max_weight_assignment(corr.cwiseAbs());
  out.signs.resize(out.perm.size());
  Matrix aligned(a_hat.rows(), a_hat.cols());
  for (std::size_t i = 0; i < out.perm.size(); ++i) {
    const Index c = out.perm[i];
    out.signs[i] = corr(static_cast<Index>(i), c) < 0.0 ? -1.0 : 1.0;
    aligned.col(static_cast<Index>(i)) = out.signs[i] * a_hat.col(c);
  }
  out.rel_error = (aligned - a_true).norm() / ref;
  out.raw_error = (a_hat - a_true).norm() / ref;
  return out;
}

Dictionary perturb_dictionary(const Dictionary& a, double eta, uint64_t seed) {
  if (eta < 0.0) throw ValidationError(kModule, "perturbation radius must be nonnegative");
  Matrix out = a.entries();
  Rng rng(seed);
  for (Index i = 0; i < out.cols(); ++i) {
    Rng col_rng = rng.split(static_cast<uint64_t>(i));
    Vector g(out.rows());
    for (Index r = 0; r < g.size(); ++r) g(r) = col_rng.normal();
    out.col(i) += eta * out.col(i).norm() * g / g.norm();
  }
  return Dictionary::normalized(std::move(out));
}

int default_p(int n) {
  return static_cast<int>(std::lround(5.0 * n * std::log(static_cast<double>(n))));
}

std::vector<int> phase_k_list(const PhaseConfig& config, int n) {
  if (!config.k_list.empty()) return config.k_list;
  std::vector<int> ks;
  for (int k = 1; k <= (n + 1) / 2; ++k) ks.push_back(k);
  return ks;
}

std::vector<PhaseCell> phase_transition_grid(const PhaseConfig& config, int jobs) {
  if (config.trials < 1) throw ValidationError(kModule, "trials must be at least 1");
  if (config.n_list.empty() || config.ratio_list.empty()) {
    throw ValidationError(kModule, "n_list and ratio_list must be nonempty");
  }
  std::vector<PhaseCell> cells;
  for (int n : config.n_list) {
    if (n < 2) throw ValidationError(kModule, "n must be at least 2");
    for (double ratio : config.ratio_list) {
      if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError(kModule, "ratio must lie in (0, 1]");
      const int m = static_cast<int>(std::lround(ratio * n));
      if (m < 1) throw ValidationError(kModule, "ratio * n rounds to zero rows");
      if (config.kind == DictionaryKind::orthonormal && m != n) {
        throw ValidationError(kModule, "orthonormal dictionaries need m = n");
      }
      for (int k : phase_k_list(config, n)) {
        if (k < 1 || k > n) throw ValidationError(kModule, "k must lie in [1, n]");
        PhaseCell c;
        c.n = n;
        c.m = m;
        c.k = k;
        c.p = config.p_override > 0 ? config.p_override : default_p(n);
        c.trials = config.trials;
        cells.push_back(c);
      }
    }
  }

  struct TrialOutcome {
    bool ok = false;
    bool success = false;
    double aligned = 0.0;
    double raw = 0.0;
    std::string error;
  };
  const std::size_t per = static_cast<std::size_t>(config.trials);
  std::vector<TrialOutcome> outcomes(cells.size() * per);
  parallel_for(outcomes.size(), jobs, [&](std::size_t idx) {
    const std::size_t ci = idx / per, t = idx % per;
    const PhaseCell& c = cells[ci];
    const uint64_t trial_seed = derive_seed(derive_seed(config.seed, ci), t);
    TrialOutcome& o = outcomes[idx];
    try {
      Instance inst = gen_instance({c.m, c.n, c.p, c.k, config.kind, trial_seed});
      Dictionary a0 = perturb_dictionary(inst.dict, config.solve.init_radius,
                                         derive_seed(trial_seed, 2));
      LearnResult res = local_solve(inst.obs, a0, config.solve);
      Alignment al = align_sign_permutation(res.a_hat, inst.dict.entries());
      o.ok = true;
      o.aligned = al.rel_error;
      o.raw = al.raw_error;
      o.success = al.rel_error < 1e-5;
    } catch (const Error& e) {
      o.error = e.what();
    }
  });

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    PhaseCell& c = cells[ci];
    int ok = 0, wins = 0;
    double aligned = 0.0, raw = 0.0;
    for (std::size_t t = 0; t < per; ++t) {
      const TrialOutcome& o = outcomes[ci * per + t];
      if (!o.ok) {
        if (c.failed_trials++ == 0) c.first_error = o.error;
        continue;
      }
      ++ok;
      wins += o.success;
      aligned += o.aligned;
      raw += o.raw;
    }
    c.success_frac = static_cast<double>(wins) / c.trials;
    c.mean_aligned_err = ok ? aligned / ok : std::numeric_limits<double>::quiet_NaN();
    c.mean_raw_err = ok ? raw / ok : std::numeric_limits<double>::quiet_NaN();
  }
  return cells;
}

std::vector<double> antitonic_fit(const std::vector<double>& values,
                                  const std::vector<double>& weights) {
  if (values.size() != weights.size()) throw ValidationError(kModule, "weights length mismatch");
  struct Block {
    double mean, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) throw ValidationError(kModule, "weights must be positive");
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean < blocks.back().mean) {
      Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      a.mean = (a.mean * a.weight + b.mean * b.weight) / (a.weight + b.weight);
      a.weight += b.weight;
      a.count += b.count;
    }
  }
  std::vector<double> fit;
  for (const Block& b : blocks) fit.insert(fit.end(), b.count, b.mean);
  return fit;
}

IsotonicCheck isotonic_check(const std::vector<double>& success, int trials) {
  if (trials < 1) throw ValidationError(kModule, "trials must be at least 1");
  IsotonicCheck r;
  r.fit = antitonic_fit(success, std::vector<double>(success.size(), 1.0));
  for (std::size_t i = 0; i < success.size(); ++i) {
    r.max_deviation = std::max(r.max_deviation, std::abs(success[i] - r.fit[i]));
  }
  r.tolerance = 2.0 * 0.5 / std::sqrt(static_cast<double>(trials));
  bool monotone = true;
  for (std::size_t i = 1; i < r.fit.size(); ++i) monotone = monotone && r.fit[i] <= r.fit[i - 1];
  r.holds = monotone && r.max_deviation <= r.tolerance;
  return r;
}

std::string phase_svg(const std::vector<PhaseCell>& cells) {
  std::map<std::pair<int, int>, std::map<int, double>> grid;
  std::vector<int> ks;
  for (const PhaseCell& c : cells) {
    grid[{c.n, c.m}][c.k] = c.success_frac;
    if (std::find(ks.begin(), ks.end(), c.k) == ks.end()) ks.push_back(c.k);
  }
  std::sort(ks.begin(), ks.end());
  const int cell = 32, left = 90, top = 20;
  const int width = left + cell * static_cast<int>(ks.size()) + 10;
  const int height = top + cell * static_cast<int>(grid.size()) + 30;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  int row = 0;
  for (const auto& [nm, byk] : grid) {
    const int y = top + row * cell;
    svg << "<text x=\"4\" y=\"" << y + cell / 2 + 4 << "\">n=" << nm.first << " m=" << nm.second
        << "</text>\n";
    for (std::size_t c = 0; c < ks.size(); ++c) {
      auto it = byk.find(ks[c]);
      if (it == byk.end()) continue;
      const int level = static_cast<int>(std::lround(255.0 * it->second));
      char color[8];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", level, level, level);
      svg << "<rect x=\"" << left + static_cast<int>(c) * cell << "\" y=\"" << y << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"" << color << "\" stroke=\"#808080\"/>\n";
    }
    ++row;
  }
  const int y = top + row * cell + 16;
  for (std::size_t c = 0; c < ks.size(); ++c) {
    svg << "<text x=\"" << left + static_cast<int>(c) * cell + cell / 2 - 4 << "\" y=\"" << y
        << "\">" << ks[c] << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace dictcert
