#include "dictcert/tangent.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>

#include "dictcert/errors.hpp"
#include "dictcert/rng.hpp"
#include "dictcert/simplex.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "tangent";

void check_shapes(const Dictionary& a, const Matrix& x, const TangentPerturbation& pert) {
  if (x.rows() != a.cols() || pert.delta_a.rows() != a.rows() ||
      pert.delta_a.cols() != a.cols() || pert.delta_x.rows() != x.rows() ||
      pert.delta_x.cols() != x.cols()) {
    throw ValidationError(kModule, "perturbation shapes do not match (A, X)");
  }
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

const char* to_string(Backend b) { return b == Backend::lp ? "lp" : "pd"; }

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible_numerics: return "infeasible_numerics";
  }
  return "unknown";
}

Backend parse_backend(const std::string& s) {
  if (s == "lp") return Backend::lp;
  if (s == "pd") return Backend::pd;
  throw ValidationError(kModule, "unknown backend '" + s + "' (expected lp or pd)");
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::certified_yes: return "certified_yes";
    case Verdict::certified_no: return "certified_no";
    case Verdict::undecided: return "undecided";
  }
  return "unknown";
}

const char* to_string(Route r) {
  switch (r) {
    case Route::certificate: return "certificate";
    case Route::direct_solve: return "direct_solve";
    case Route::balancedness_failure: return "balancedness_failure";
  }
  return "unknown";
}

TangentResidual tangent_residual(const Dictionary& a, const Matrix& x,
                                 const TangentPerturbation& pert) {
  check_shapes(a, x, pert);
  TangentResidual r;
  r.bilinear_norm = (pert.delta_a * x + a.entries() * pert.delta_x).norm();
  r.diag_inf = c_a_adjoint(a, pert.delta_a).cwiseAbs().maxCoeff();
  return r;
}

bool tangent_feasible(const Dictionary& a, const Matrix& x, const TangentPerturbation& pert,
                      double tol) {
  TangentResidual r = tangent_residual(a, x, pert);
  double scale = pert.delta_a.norm() * spectral_norm(x) + a.op_norm() * pert.delta_x.norm();
  return r.bilinear_norm <= tol * std::max(scale, 1e-300) &&
         r.diag_inf <= tol * std::max(1.0, pert.delta_a.norm());
}

RipWitness rip_failure_witness(const Dictionary& a, const Matrix& x, std::span<const int> perm) {
  const Index n = a.cols();
  if (static_cast<Index>(perm.size()) != n || x.rows() != n) {
    throw ValidationError(kModule, "permutation length must equal n");
  }
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    int t = perm[static_cast<std::size_t>(i)];
    if (t < 0 || t >= n || seen[static_cast<std::size_t>(t)]++) {
      throw ValidationError(kModule, "perm is not a permutation of [n]");
    }
    if (t == i) {
      throw ValidationError(kModule, "permutation has a fixed point at " + std::to_string(i));
    }
  }
  RipWitness w;
  w.pert.delta_a.resize(a.rows(), n);
  w.pert.delta_x.resize(n, x.cols());
  for (Index i = 0; i < n; ++i) {
    const int t = perm[static_cast<std::size_t>(i)];
    w.pert.delta_a.col(i) = -a.col(t);
    w.pert.delta_x.row(t) = x.row(i);
  }
  w.residual = tangent_residual(a, x, w.pert);
  w.same_column_sparsity = true;
  for (Index j = 0; j < x.cols(); ++j) {
    auto nnz_x = (x.col(j).array() != 0.0).count();
    auto nnz_d = (w.pert.delta_x.col(j).array() != 0.0).count();
    if (nnz_x != nnz_d) w.same_column_sparsity = false;
  }
  return w;
}

TangentBasis::TangentBasis(const Dictionary& a, const Matrix& x)
    : m_(a.rows()), n_(a.cols()), p_(x.cols()) {
  if (x.rows() != n_) throw ValidationError(kModule, "X must have n rows");
  const Matrix& am = a.entries();
  Eigen::JacobiSVD<Matrix> svd(am);
  const Vector& sv = svd.singularValues();
  if (!(sv(sv.size() - 1) > 1e-10 * sv(0))) {
    throw ConditioningError(kModule, "A does not have full row rank");
  }
  // A^+ = A^T (A A^T)^{-1}.
  pinv_ = am.transpose() * (am * am.transpose()).inverse();
  Eigen::HouseholderQR<Matrix> qr_t(am.transpose());
  Matrix q_full = qr_t.householderQ();
  null_ = q_full.rightCols(n_ - m_);

  complements_.reserve(static_cast<std::size_t>(n_));
  for (Index i = 0; i < n_; ++i) {
    Eigen::HouseholderQR<Matrix> qr_i(am.col(i));
    Matrix qi = qr_i.householderQ();
    complements_.push_back(qi.rightCols(m_ - 1));
  }
  num_params_ = n_ * (m_ - 1) + (n_ - m_) * p_;
  coeff_map_ = Matrix::Zero(n_ * p_, num_params_);
  Index col = 0;
  for (Index i = 0; i < n_; ++i) {
    Matrix dirs = -pinv_ * complements_[static_cast<std::size_t>(i)];  // n x (m-1)
    for (Index l = 0; l < m_ - 1; ++l, ++col) {
      for (Index j = 0; j < p_; ++j) {
        double xij = x(i, j);
        if (xij != 0.0) coeff_map_.col(col).segment(j * n_, n_) = xij * dirs.col(l);
      }
    }
  }
  for (Index j = 0; j < p_; ++j) {
    for (Index r = 0; r < n_ - m_; ++r) {
      coeff_map_.col(col + j * (n_ - m_) + r).segment(j * n_, n_) = null_.col(r);
    }
  }
}

TangentPerturbation TangentBasis::perturbation(const Vector& theta) const {
  if (theta.size() != num_params_) throw ValidationError(kModule, "parameter vector length");
  TangentPerturbation pert;
  pert.delta_a.resize(m_, n_);
  Index off = 0;
  for (Index i = 0; i < n_; ++i, off += m_ - 1) {
    pert.delta_a.col(i) = complements_[static_cast<std::size_t>(i)] * theta.segment(off, m_ - 1);
  }
  Vector dx = coeff_map_ * theta;
  pert.delta_x = Eigen::Map<const Matrix>(dx.data(), n_, p_);
  return pert;
}

namespace {

// Orthonormal basis of the image of the coefficient map and the way back
// to parameters.
class TangentImage {
 public:
  explicit TangentImage(const Matrix& map) {
    const Index rows = map.rows(), cols = map.cols();
    if (cols == 0) {
      rank_ = 0;
      basis_.resize(rows, 0);
      return;
    }
    Eigen::HouseholderQR<Matrix> qr(map);
    Matrix r = qr.matrixQR().topRows(std::min(rows, cols)).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(r);
    const Vector& sv = svd.singularValues();
    if (rows >= cols && sv(sv.size() - 1) > 1e-10 * sv(0)) {
      rank_ = cols;
      basis_ = qr.householderQ() * Matrix::Identity(rows, cols);
      r_ = r.topRows(cols);
      full_ = true;
      return;
    }
    Eigen::ColPivHouseholderQR<Matrix> cqr(map);
    cqr.setThreshold(1e-10);
    rank_ = cqr.rank();
    basis_ = cqr.householderQ() * Matrix::Identity(rows, rank_);
    r_ = cqr.matrixR().topLeftCorner(rank_, rank_).triangularView<Eigen::Upper>();
    perm_ = cqr.colsPermutation().indices();
    cols_ = cols;
  }

  const Matrix& basis() const { return basis_; }
  Index rank() const { return rank_; }
  bool full_rank() const { return full_; }

  // Parameters theta with map * theta = basis * y.
  Vector params(const Vector& y) const {
    if (full_) return r_.triangularView<Eigen::Upper>().solve(y);
    Vector t = Vector::Zero(cols_);
    if (rank_ > 0) {
      Vector s = r_.triangularView<Eigen::Upper>().solve(y);
      for (Index c = 0; c < rank_; ++c) t(perm_(c)) = s(c);
    }
    return t;
  }

 private:
  Matrix basis_;
  Matrix r_;
  Eigen::VectorXi perm_;
  Index rank_ = 0;
  Index cols_ = 0;
  bool full_ = false;
};

struct ImageSolve {
  Vector y;       // coordinates in the orthonormal image basis
  Vector dual;    // u with basis^T u = 0, |u| <= 1
  double dual_bound = 0.0;
  SolveStatus status = SolveStatus::optimal;
  int iterations = 0;
};

// min_y ||b + Q y||_1 via the dual LP  max b^T u, Q^T u = 0, -1 <= u <= 1.
ImageSolve solve_image_lp(const Matrix& q, const Vector& b) {
  ImageSolve out;
  const Index rows = q.cols(), cols = q.rows();
  LpProblem lp;
  lp.a = q.transpose();
  lp.b = Vector::Zero(rows);
  lp.c = -b;
  lp.lower = Vector::Constant(cols, -1.0);
  lp.upper = Vector::Constant(cols, 1.0);
  LpOptions opts;
  opts.start_at_upper.resize(static_cast<std::size_t>(cols));
  for (Index j = 0; j < cols; ++j) opts.start_at_upper[static_cast<std::size_t>(j)] = b(j) > 0;
  LpResult res = solve_lp(lp, opts);
  out.iterations = res.iterations;
  if (res.status == LpStatus::iteration_limit) {
    out.status = SolveStatus::max_iter;
  } else if (res.status != LpStatus::optimal) {
    out.status = SolveStatus::infeasible_numerics;
  }
  out.y = res.duals;
  out.dual = res.x.cwiseMax(-1.0).cwiseMin(1.0);
  // Remove the residual image component so the bound is a valid dual value.
  out.dual -= q * (q.transpose() * out.dual);
  double inf = out.dual.size() ? out.dual.cwiseAbs().maxCoeff() : 0.0;
  if (inf > 1.0) out.dual /= inf;
  out.dual_bound = b.dot(out.dual);
  return out;
}

Vector soft_threshold(const Vector& v, double t) {
  return v.unaryExpr([t](double s) { return s > t ? s - t : (s < -t ? s + t : 0.0); });
}

// Same problem by ADMM on  min ||z||_1  s.t.  z = x, x in b + range(Q).
ImageSolve solve_image_admm(const Matrix& q, const Vector& b, double target_gap, int max_iter) {
  ImageSolve out;
  const Index len = b.size();
  const double b_l1 = b.lpNorm<1>();
  const Index nnz = (b.array() != 0.0).count();
  double rho = nnz > 0 ? static_cast<double>(nnz) / b_l1 : 1.0;
  Vector z = b, u = Vector::Zero(len), x = b, z_prev;
  Vector best_y = Vector::Zero(q.cols());
  double best_primal = b_l1;
  out.dual = Vector::Zero(len);
  out.dual_bound = 0.0;
  out.status = SolveStatus::max_iter;
  for (int it = 1; it <= max_iter; ++it) {
    Vector y = q.transpose() * (z - u - b);
    x = b + q * y;
    z_prev = z;
    z = soft_threshold(x + u, 1.0 / rho);
    u += x - z;
    out.iterations = it;
    if (it % 10 == 0) {
      double primal = x.lpNorm<1>();
      if (primal < best_primal) {
        best_primal = primal;
        best_y = y;
      }
      Vector v = rho * u;
      v -= q * (q.transpose() * v);
      double inf = v.cwiseAbs().maxCoeff();
      if (inf > 1.0) v /= inf;
      double bound = b.dot(v);
      if (bound > out.dual_bound) {
        out.dual_bound = bound;
        out.dual = v;
      }
      if (best_primal - out.dual_bound <= target_gap) {
        out.status = SolveStatus::optimal;
        break;
      }
    }
    if (it % 50 == 0) {
      double rp = (x - z).norm();
      double rd = rho * (z - z_prev).norm();
      if (rp > 10.0 * rd) {
        rho *= 2.0;
        u /= 2.0;
      } else if (rd > 10.0 * rp) {
        rho /= 2.0;
        u *= 2.0;
      }
    }
  }
  out.y = best_y;
  return out;
}

struct LinearizedModel {
  LinearizedModel(const Dictionary& a, const Matrix& x) : basis(a, x), image(basis.coeff_map()) {}
  TangentBasis basis;
  TangentImage image;
};

LinearizedSolution solve_model(const LinearizedModel& model, const Matrix& x,
                               const SolverParams& params) {
  LinearizedSolution sol;
  const Vector b = vec(x);
  sol.x_l1 = b.lpNorm<1>();
  sol.rank = model.image.rank();
  sol.num_params = model.basis.num_params();
  const Matrix& q = model.image.basis();
  ImageSolve is = params.backend == Backend::lp
                      ? solve_image_lp(q, b)
                      : solve_image_admm(q, b, params.gap_tol * sol.x_l1, params.max_iter);
  sol.status = is.status;
  sol.iterations = is.iterations;
  sol.dual = is.dual;
  sol.pert = model.basis.perturbation(model.image.params(is.y));
  sol.objective = (x + sol.pert.delta_x).lpNorm<1>();
  if (sol.objective > sol.x_l1) {
    // Never report worse than the zero perturbation.
    sol.pert.delta_a.setZero();
    sol.pert.delta_x.setZero();
    sol.objective = sol.x_l1;
  }
  sol.gap = std::max(0.0, sol.objective - is.dual_bound);
  if (sol.status == SolveStatus::optimal && params.backend == Backend::lp &&
      sol.gap > 1e-7 * std::max(1.0, sol.x_l1)) {
    sol.status = SolveStatus::infeasible_numerics;
  }
  return sol;
}

void check_size(const Dictionary& a, const Matrix& x, const SolverParams& params) {
  Index vars = x.size() + a.entries().size();
  if (vars > params.max_variables) {
    throw ValidationError(kModule, "linearized problem has " + std::to_string(vars) +
                                       " variables, above the limit of " +
                                       std::to_string(params.max_variables));
  }
}

// Exists u with u_Omega = sigma, |u_c| <= 1 - margin and u orthogonal to
// the tangent image?
bool strict_dual_feasible(const Matrix& q, const SparseCoeffs& x, double margin) {
  const Index n = x.n(), p = x.p();
  std::vector<Index> on, off;
  Vector sigma(static_cast<Index>(x.k()) * p);
  Index c = 0;
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) {
      if (x.signs()(i, j) != 0.0) {
        on.push_back(j * n + i);
        sigma(c++) = x.signs()(i, j);
      } else {
        off.push_back(j * n + i);
      }
    }
  }
  const Index r = q.cols();
  LpProblem lp;
  lp.a.resize(r, static_cast<Index>(off.size()));
  for (std::size_t t = 0; t < off.size(); ++t) lp.a.col(static_cast<Index>(t)) = q.row(off[t]).transpose();
  Vector rhs = Vector::Zero(r);
  for (std::size_t t = 0; t < on.size(); ++t) rhs -= sigma(static_cast<Index>(t)) * q.row(on[t]).transpose();
  lp.b = rhs;
  lp.c = Vector::Zero(static_cast<Index>(off.size()));
  lp.lower = Vector::Constant(static_cast<Index>(off.size()), -(1.0 - margin));
  lp.upper = Vector::Constant(static_cast<Index>(off.size()), 1.0 - margin);
  LpOptions opts;
  opts.feasibility_only = true;
  LpResult res = solve_lp(lp, opts);
  if (res.status != LpStatus::optimal) return false;
  // Independent recheck of the equality constraints.
  Vector resid = lp.a * res.x - lp.b;
  return resid.cwiseAbs().maxCoeff() <= 1e-8 &&
         res.x.cwiseAbs().maxCoeff() <= 1.0 - margin + 1e-12;
}

// Image restricted to the off-support coordinates is injective?
bool off_support_injective(const LinearizedModel& model, const SparseCoeffs& x) {
  if (model.image.rank() < model.basis.num_params()) return false;
  const Matrix& q = model.image.basis();
  const Index r = q.cols();
  if (r == 0) return true;
  Matrix on_gram = Matrix::Zero(r, r);
  const Index n = x.n();
  for (Index j = 0; j < x.p(); ++j) {
    for (int i : x.support().col(static_cast<int>(j))) {
      auto row = q.row(j * n + i);
      on_gram.noalias() += row.transpose() * row;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(on_gram, Eigen::EigenvaluesOnly);
  return 1.0 - eig.eigenvalues().maxCoeff() > 1e-10;
}

}  // namespace

LinearizedSolution solve_linearized(const Dictionary& a, const Matrix& x,
                                    const SolverParams& params) {
  if (x.rows() != a.cols()) throw ValidationError(kModule, "X must have n rows");
  check_size(a, x, params);
  LinearizedModel model(a, x);
  return solve_model(model, x, params);
}

Vector kkt_gamma(const Dictionary& a, const Matrix& lambda, const Matrix& x) {
  if (lambda.rows() != a.rows() || lambda.cols() != x.cols() || x.rows() != a.cols()) {
    throw ValidationError(kModule, "kkt_gamma: shape mismatch");
  }
  return c_a_adjoint(a, lambda * x.transpose());
}

KktReport kkt_check(const Dictionary& a, const SparseCoeffs& x, const Matrix& lambda,
                    const Vector& gamma, double tol) {
  if (lambda.rows() != a.rows() || lambda.cols() != x.p() || x.n() != a.cols() ||
      gamma.size() != a.cols()) {
    throw ValidationError(kModule, "kkt_check: shape mismatch");
  }
  KktReport r;
  Matrix corr = a.entries().transpose() * lambda;
  for (Index j = 0; j < corr.cols(); ++j) {
    for (Index i = 0; i < corr.rows(); ++i) {
      double s = x.signs()(i, j);
      if (s != 0.0) {
        r.interp_dev = std::max(r.interp_dev, std::abs(corr(i, j) - s));
      } else {
        r.offsup_inf = std::max(r.offsup_inf, std::abs(corr(i, j)));
      }
    }
  }
  r.residual = (lambda * x.dense().transpose() - a.entries() * gamma.asDiagonal()).norm();
  r.interp_ok = r.interp_dev <= tol;
  r.offsup_ok = r.offsup_inf <= 1.0 + 1e-12;
  r.residual_ok = r.residual <= tol;
  return r;
}

namespace {

// Smallest one-sided directional derivative of ||X + dX||_1 per unit length
// over random tangent directions.
double sample_sharpness(const TangentBasis& basis, const SparseCoeffs& x,
                        const OptimalityConfig& config) {
  const Matrix& xd = x.dense();
  Rng rng(config.seed);
  double beta = std::numeric_limits<double>::infinity();
  const Index q = basis.num_params();
  for (int s = 0; s < config.uniqueness_samples; ++s) {
    Vector theta(q);
    for (Index t = 0; t < q; ++t) theta(t) = rng.normal();
    TangentPerturbation d = basis.perturbation(theta);
    double len = std::sqrt(d.delta_a.squaredNorm() + d.delta_x.squaredNorm());
    if (len == 0.0) continue;
    double deriv = 0.0;
    for (Index j = 0; j < xd.cols(); ++j) {
      for (Index i = 0; i < xd.rows(); ++i) {
        double sg = x.signs()(i, j);
        deriv += sg != 0.0 ? sg * d.delta_x(i, j) : std::abs(d.delta_x(i, j));
      }
    }
    beta = std::min(beta, deriv / len);
  }
  return beta;
}

}  // namespace

OptimalityVerdict is_local_min(const Dictionary& a, const SparseCoeffs& x,
                               const OptimalityConfig& config) {
  if (x.n() != a.cols()) throw ValidationError(kModule, "is_local_min: shape mismatch");
  OptimalityVerdict v;
  const Matrix& xd = x.dense();
  v.x_l1 = xd.lpNorm<1>();
  bool balancedness_failed = false;

  if (config.use_certificate) {
    try {
      AlphaEstimate est = estimate_alpha(a, x, config.balancedness);
      v.alpha = est;
      if (est.degenerate) {
        balancedness_failed = true;
        v.balancedness_note = "restricted singular value is zero";
      } else {
        CertificateState cert = build_certificate(a, x, config.certificate);
        CertificateReport rep = verify_certificate(a, x, cert.lambda, est.alpha);
        v.certificate = rep;
        if (rep.all()) {
          v.verdict = Verdict::certified_yes;
          v.route = Route::certificate;
          if (config.uniqueness_samples > 0) {
            v.sharpness = sample_sharpness(TangentBasis(a, x.dense()), x, config);
          }
          return v;
        }
      }
    } catch (const NumericalError& e) {
      balancedness_failed = true;
      v.balancedness_note = e.what();
    }
  }

  v.route = balancedness_failed ? Route::balancedness_failure : Route::direct_solve;
  if (!config.use_direct) return v;
  if (xd.size() + a.entries().size() > config.solver.max_variables) return v;

  std::optional<LinearizedModel> model;
  try {
    model.emplace(a, xd);
  } catch (const NumericalError& e) {
    if (v.balancedness_note.empty()) v.balancedness_note = e.what();
    return v;
  }
  LinearizedSolution sol = solve_model(*model, xd, config.solver);
  v.direct_ran = true;
  v.objective = sol.objective;
  v.gap = sol.gap;

  if (sol.objective < v.x_l1 - config.descent_tol) {
    // Re-verify the improving direction independently of the solver.
    double direct = (xd + sol.pert.delta_x).lpNorm<1>();
    if (tangent_feasible(a, xd, sol.pert, 1e-9) && direct < v.x_l1 - config.descent_tol) {
      v.verdict = Verdict::certified_no;
      v.route = Route::direct_solve;
      v.improving = sol.pert;
    }
    return v;
  }
  if (sol.status != SolveStatus::optimal) return v;
  if (std::abs(sol.objective - v.x_l1) > config.objective_tol * std::max(1.0, v.x_l1)) return v;

  v.injective = off_support_injective(*model, x);
  if (!v.injective) return v;
  v.strict_dual = strict_dual_feasible(model->image.basis(), x, config.dual_margin);
  if (!v.strict_dual) return v;
  v.verdict = Verdict::certified_yes;
  v.route = Route::direct_solve;

  if (config.uniqueness_samples > 0) v.sharpness = sample_sharpness(model->basis, x, config);
  return v;
}

}  // namespace dictcert
