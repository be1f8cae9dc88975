#include "dictcert/balancedness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dictcert/errors.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "balancedness";

Matrix unvec(const Vector& z, Index n, Index p) {
  if (z.size() != n * p) {
    throw ValidationError(kModule, "vector length " + std::to_string(z.size()) +
                                       " does not match n*p = " + std::to_string(n * p));
  }
  return Eigen::Map<const Matrix>(z.data(), n, p);
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix embed(const Vector& v, const std::vector<Index>& coords, Index n, Index p) {
  Matrix z = Matrix::Zero(n, p);
  for (std::size_t c = 0; c < coords.size(); ++c) z.data()[coords[c]] = v(static_cast<Index>(c));
  return z;
}

void gather(const Matrix& z, const std::vector<Index>& coords, Vector& out) {
  out.resize(static_cast<Index>(coords.size()));
  for (std::size_t c = 0; c < coords.size(); ++c) out(static_cast<Index>(c)) = z.data()[coords[c]];
}

double largest_abs_eigenvalue(const Matrix& s) {
  if (s.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

// Largest eigenvalue of a PSD operator via Lanczos on its negation.
double largest_eigenvalue(const LinearOperator& op, Index dim, const BalancednessOptions& opts,
                          uint64_t salt) {
  if (dim == 0) return 0.0;
  LinearOperator neg = [&](const Vector& in, Vector& out) {
    op(in, out);
    out = -out;
  };
  EigenEstimate e = lanczos_smallest(neg, dim, opts.lanczos_tol, opts.lanczos_restarts,
                                     opts.seed + salt);
  return -e.value;
}

}  // namespace

CoefficientOperators::CoefficientOperators(const Dictionary& a, const Matrix& x)
    : a_(a.entries()), x_(x) {
  if (x.rows() != a.cols()) throw ValidationError(kModule, "X must have n rows");
  h_ = a_.transpose() * a_;
  Matrix xx = x_ * x_.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(xx);
  xx_lambda_min_ = eig.eigenvalues()(0);
  xx_lambda_max_ = eig.eigenvalues()(xx.rows() - 1);
  if (!(xx_lambda_min_ > 1e-10)) {
    throw ConditioningError(kModule, "X X^T is not invertible (lambda_min = " +
                                         std::to_string(xx_lambda_min_) + ")");
  }
  const Matrix& v = eig.eigenvectors();
  g_ = v * eig.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
  gx_ = g_ * x_;
}

Matrix CoefficientOperators::apply_T(const Matrix& z) const {
  if (z.rows() != x_.rows() || z.cols() != x_.cols()) {
    throw ValidationError(kModule, "apply_T: argument has the wrong shape");
  }
  Matrix w = (z * x_.transpose()) * g_;  // Z X^T G
  Matrix u = a_ * w;
  Vector c = a_.cwiseProduct(u).colwise().sum().transpose();
  return h_ * (z - w * x_) + (h_ * c.asDiagonal()) * gx_;
}

Matrix CoefficientOperators::apply_R(const Matrix& z) const {
  if (z.rows() != x_.rows() || z.cols() != x_.cols()) {
    throw ValidationError(kModule, "apply_R: argument has the wrong shape");
  }
  Matrix u = a_ * (z * x_.transpose());
  Vector c = a_.cwiseProduct(u).colwise().sum().transpose();
  u -= a_ * c.asDiagonal();
  return (a_.transpose() * u) * x_;
}

Matrix CoefficientOperators::apply_T_hat(const Matrix& z) const { return h_ * z - apply_R(z); }

Vector apply_T(const Dictionary& a, const SparseCoeffs& x, const Vector& z) {
  CoefficientOperators ops(a, x.dense());
  return vec(ops.apply_T(unvec(z, x.n(), x.p())));
}

Vector apply_T_hat(const Dictionary& a, const SparseCoeffs& x, const Vector& z) {
  if (x.n() != a.cols()) throw ValidationError(kModule, "apply_T_hat: shape mismatch");
  Matrix zm = unvec(z, x.n(), x.p());
  const Matrix& am = a.entries();
  const Matrix& xd = x.dense();
  Matrix u = am * (zm * xd.transpose());
  Matrix r = (am.transpose() * phi_project(a, u)) * xd;
  return vec(am.transpose() * (am * zm) - r);
}

Vector apply_R(const Dictionary& a, const SparseCoeffs& x, const Vector& z) {
  if (x.n() != a.cols()) throw ValidationError(kModule, "apply_R: shape mismatch");
  Matrix zm = unvec(z, x.n(), x.p());
  const Matrix& am = a.entries();
  const Matrix& xd = x.dense();
  Matrix u = am * (zm * xd.transpose());
  return vec((am.transpose() * phi_project(a, u)) * xd);
}

std::vector<Index> support_coordinates(const SupportPattern& s) {
  std::vector<Index> coords;
  coords.reserve(static_cast<std::size_t>(s.k()) * static_cast<std::size_t>(s.p()));
  for (int j = 0; j < s.p(); ++j) {
    for (int i : s.col(j)) coords.push_back(static_cast<Index>(j) * s.n() + i);
  }
  return coords;
}

PsiTerm::PsiTerm(const Dictionary& a, const SparseCoeffs& x, int row)
    : support_(&x.support()), row_(row) {
  if (row < 0 || row >= x.n()) {
    throw ValidationError(kModule, "psi_term: row " + std::to_string(row) + " out of range");
  }
  if (x.n() != a.cols()) throw ValidationError(kModule, "psi_term: shape mismatch");
  const Matrix& am = a.entries();
  Matrix h = am.transpose() * am;
  Vector hi = h.col(row);
  hi_ = h - hi * hi.transpose();
  hi_.row(row).setZero();
  hi_.col(row).setZero();
  w_ = x.dense().row(row).transpose();
  d_ = Vector::Zero(x.n());
  for (int a_row = 0; a_row < x.n(); ++a_row) {
    for (int j : x.support().row(a_row)) d_(a_row) += w_(j) * w_(j);
  }
}

Matrix PsiTerm::apply(const Matrix& z) const {
  const SupportPattern& s = *support_;
  if (z.rows() != s.n() || z.cols() != s.p()) {
    throw ValidationError(kModule, "psi_term: argument has the wrong shape");
  }
  // L z: (L z)_a = sum over j in Omega^a of z(a, j) w_j.
  Vector lz = Vector::Zero(s.n());
  for (int j = 0; j < s.p(); ++j) {
    for (int i : s.col(j)) lz(i) += z(i, j) * w_(j);
  }
  Vector y = hi_ * lz;
  Matrix out = Matrix::Zero(s.n(), s.p());
  for (int j = 0; j < s.p(); ++j) {
    for (int i : s.col(j)) out(i, j) = y(i) * w_(j);
  }
  return out;
}

double PsiTerm::norm(double rel_tol) const {
  Vector sd = d_.cwiseSqrt();
  Matrix reduced = sd.asDiagonal() * hi_ * sd.asDiagonal();
  if (reduced.norm() == 0.0) return 0.0;
  LinearOperator op = [&](const Vector& in, Vector& out) { out = reduced * in; };
  EigenEstimate e = power_iteration(op, reduced.rows(), rel_tol, 100000,
                                    0x9e3779b9ULL + static_cast<uint64_t>(row_));
  return e.value;
}

bool PsiTerm::event_holds() const {
  const SupportPattern& s = *support_;
  const double limit = 2.0 * std::sqrt(static_cast<double>(s.k()) / s.n());
  for (int a = 0; a < s.n(); ++a) {
    if (a != row_ && std::sqrt(d_(a)) > limit) return false;
  }
  return w_.norm() <= 2.0;
}

PsiTerm psi_term(const Dictionary& a, const SparseCoeffs& x, int row) { return PsiTerm(a, x, row); }

Matrix compressed_T(const CoefficientOperators& ops, const SparseCoeffs& x) {
  const SupportPattern& s = x.support();
  const int p = s.p(), k = s.k();
  const Index n = s.n();
  const Index dim = static_cast<Index>(k) * p;
  const Matrix& h = ops.gram();
  const Matrix& g = ops.xx_inverse();
  const Matrix& xd = x.dense();
  Matrix gx = g * xd;  // column j is K(j, .)

  Matrix out(dim, dim);
  // (delta_{jj'} - P_X(j, j')) H(i, i'), with P_X(j, j') = x_j^T G x_j'.
  for (int j = 0; j < p; ++j) {
    const auto& oj = s.col(j);
    for (int jp = j; jp < p; ++jp) {
      const auto& ojp = s.col(jp);
      double px = 0.0;
      for (int a : oj) px += xd(a, j) * gx(a, jp);
      double f = (j == jp ? 1.0 : 0.0) - px;
      for (int c = 0; c < k; ++c) {
        for (int cp = 0; cp < k; ++cp) {
          double v = f * h(oj[static_cast<std::size_t>(c)], ojp[static_cast<std::size_t>(cp)]);
          out(static_cast<Index>(j) * k + c, static_cast<Index>(jp) * k + cp) = v;
          out(static_cast<Index>(jp) * k + cp, static_cast<Index>(j) * k + c) = v;
        }
      }
    }
  }
  // V V^T with row (i, j) of V equal to (H(l, i) K(j, l))_l.
  Matrix v(dim, n);
  for (int j = 0; j < p; ++j) {
    for (int c = 0; c < k; ++c) {
      const int i = s.col(j)[static_cast<std::size_t>(c)];
      v.row(static_cast<Index>(j) * k + c) = h.col(i).cwiseProduct(gx.col(j)).transpose();
    }
  }
  out.noalias() += v * v.transpose();
  return out;
}

Matrix compressed_T(const Dictionary& a, const SparseCoeffs& x) {
  CoefficientOperators ops(a, x.dense());
  return compressed_T(ops, x);
}

Matrix compressed_R(const CoefficientOperators& ops, const SparseCoeffs& x) {
  const SupportPattern& s = x.support();
  const int p = s.p(), k = s.k();
  const Index n = s.n();
  const Index dim = static_cast<Index>(k) * p;
  const Matrix& h = ops.gram();
  const Matrix& xd = x.dense();
  Matrix xtx = xd.transpose() * xd;
  Matrix out(dim, dim);
  for (int j = 0; j < p; ++j) {
    const auto& oj = s.col(j);
    for (int jp = j; jp < p; ++jp) {
      const auto& ojp = s.col(jp);
      double f = xtx(j, jp);
      for (int c = 0; c < k; ++c) {
        for (int cp = 0; cp < k; ++cp) {
          double v = f * h(oj[static_cast<std::size_t>(c)], ojp[static_cast<std::size_t>(cp)]);
          out(static_cast<Index>(j) * k + c, static_cast<Index>(jp) * k + cp) = v;
          out(static_cast<Index>(jp) * k + cp, static_cast<Index>(j) * k + c) = v;
        }
      }
    }
  }
  // Subtract U U^T with row (i, j) of U equal to (X(b, j) H(b, i))_b.
  Matrix u(dim, n);
  for (int j = 0; j < p; ++j) {
    for (int c = 0; c < k; ++c) {
      const int i = s.col(j)[static_cast<std::size_t>(c)];
      u.row(static_cast<Index>(j) * k + c) = h.col(i).cwiseProduct(xd.col(j)).transpose();
    }
  }
  out.noalias() -= u * u.transpose();
  return out;
}

namespace {

struct XiResult {
  double xi = 0.0;
  bool dense = true;
  bool converged = true;
};

XiResult compute_xi(const CoefficientOperators& ops, const SparseCoeffs& x,
                    const BalancednessOptions& opts, const Matrix* dense_t) {
  const Index dim = static_cast<Index>(x.k()) * x.p();
  XiResult r;
  if (dim <= opts.dense_limit) {
    Matrix local;
    const Matrix& ct = dense_t ? *dense_t : (local = compressed_T(ops, x));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(ct, Eigen::EigenvaluesOnly);
    r.xi = eig.eigenvalues().cwiseAbs().minCoeff();
    return r;
  }
  r.dense = false;
  const auto coords = support_coordinates(x.support());
  const Index n = x.n(), p = x.p();
  LinearOperator op = [&](const Vector& in, Vector& out) {
    gather(ops.apply_T(embed(in, coords, n, p)), coords, out);
  };
  EigenEstimate e = lanczos_smallest(op, dim, opts.lanczos_tol, opts.lanczos_restarts, opts.seed);
  r.xi = std::abs(e.value);
  r.converged = e.converged;
  return r;
}

double offdiag_norm(const CoefficientOperators& ops, const SparseCoeffs& x,
                    const BalancednessOptions& opts) {
  if (x.k() == x.n()) return 0.0;
  const auto coords = support_coordinates(x.support());
  const Index n = x.n(), p = x.p();
  LinearOperator op = [&](const Vector& in, Vector& out) {
    Matrix w = ops.apply_T(embed(in, coords, n, p));
    for (Index c : coords) w.data()[c] = 0.0;
    gather(ops.apply_T(w), coords, out);
  };
  return std::sqrt(std::max(0.0, largest_eigenvalue(op, static_cast<Index>(coords.size()), opts, 1)));
}

AlphaEstimate alpha_from(const Dictionary& a, const CoefficientOperators& ops,
                         const XiResult& xi, double offdiag) {
  AlphaEstimate est;
  est.xi = xi.xi;
  est.dense = xi.dense;
  est.offdiag_norm = offdiag;
  est.xx_lambda_min = ops.xx_lambda_min();
  est.op_norm = a.op_norm();
  const double tol = 1e-12 * std::max(1.0, ops.gram().norm());
  if (!(xi.xi > tol)) {
    est.degenerate = true;
    est.alpha = 0.0;
    return est;
  }
  est.alpha = 1.0 / (a.op_norm() / std::sqrt(ops.xx_lambda_min()) * (1.0 + offdiag / xi.xi));
  return est;
}

}  // namespace

RestrictedSv restricted_min_sv(const Dictionary& a, const SparseCoeffs& x,
                               const BalancednessOptions& opts) {
  CoefficientOperators ops(a, x.dense());
  XiResult r = compute_xi(ops, x, opts, nullptr);
  return RestrictedSv{r.xi, r.dense, r.converged};
}

AlphaEstimate estimate_alpha(const Dictionary& a, const SparseCoeffs& x,
                             const BalancednessOptions& opts) {
  CoefficientOperators ops(a, x.dense());
  XiResult xi = compute_xi(ops, x, opts, nullptr);
  return alpha_from(a, ops, xi, offdiag_norm(ops, x, opts));
}

BalancednessReport alpha_bound(const Dictionary& a, const SparseCoeffs& x,
                               const BalancednessOptions& opts) {
  CoefficientOperators ops(a, x.dense());
  const SupportPattern& s = x.support();
  const Index dim = static_cast<Index>(x.k()) * x.p();
  const Index n = x.n(), p = x.p();
  const Matrix& h = ops.gram();
  BalancednessReport r;

  XiResult xi;
  if (dim <= opts.dense_limit) {
    Matrix ct = compressed_T(ops, x);
    Matrix cr = compressed_R(ops, x);
    xi = compute_xi(ops, x, opts, &ct);
    // T_hat compressed: block diagonal H_{Omega_j} minus R.
    Matrix diff = ct + cr;
    const int k = x.k();
    for (int j = 0; j < p; ++j) {
      for (int c = 0; c < k; ++c) {
        for (int cp = 0; cp < k; ++cp) {
          diff(static_cast<Index>(j) * k + c, static_cast<Index>(j) * k + cp) -=
              h(s.col(j)[static_cast<std::size_t>(c)], s.col(j)[static_cast<std::size_t>(cp)]);
        }
      }
    }
    r.term_R = largest_abs_eigenvalue(cr);
    r.term_Tdiff = largest_abs_eigenvalue(diff);
  } else {
    xi = compute_xi(ops, x, opts, nullptr);
    const auto coords = support_coordinates(s);
    LinearOperator rop = [&](const Vector& in, Vector& out) {
      gather(ops.apply_R(embed(in, coords, n, p)), coords, out);
    };
    r.term_R = largest_eigenvalue(rop, dim, opts, 2);
    LinearOperator dop = [&](const Vector& in, Vector& out) {
      Matrix z = embed(in, coords, n, p);
      gather(ops.apply_T(z) - ops.apply_T_hat(z), coords, out);
    };
    LinearOperator ndop = [&](const Vector& in, Vector& out) {
      dop(in, out);
      out = -out;
    };
    double top = -lanczos_smallest(ndop, dim, opts.lanczos_tol, opts.lanczos_restarts, opts.seed + 3).value;
    double bottom = lanczos_smallest(dop, dim, opts.lanczos_tol, opts.lanczos_restarts, opts.seed + 4).value;
    r.term_Tdiff = std::max(std::abs(top), std::abs(bottom));
  }

  AlphaEstimate est = alpha_from(a, ops, xi, offdiag_norm(ops, x, opts));
  r.xi = est.xi;
  r.alpha = est.alpha;
  r.offdiag_norm = est.offdiag_norm;
  r.xx_lambda_min = est.xx_lambda_min;
  r.degenerate = est.degenerate;
  r.dense = est.dense;

  r.term_identity = std::numeric_limits<double>::infinity();
  for (int j = 0; j < p; ++j) {
    Matrix al = select_columns(a.entries(), s.col(j));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(al.transpose() * al, Eigen::EigenvaluesOnly);
    r.term_identity = std::min(r.term_identity, eig.eigenvalues()(0));
    r.block_norm_sq = std::max(r.block_norm_sq, eig.eigenvalues()(eig.eigenvalues().size() - 1));
  }
  const Matrix& xd = x.dense();
  r.eig_gap = largest_abs_eigenvalue(xd * xd.transpose() - Matrix::Identity(n, n));
  r.xi_gap = largest_abs_eigenvalue(ops.xx_inverse() - Matrix::Identity(n, n));
  r.chain_holds = r.xi >= r.term_identity - r.term_R - r.term_Tdiff - 1e-8;

  r.psi_bound = 4.0 * x.k() / static_cast<double>(n) + 24.0 * x.k() * a.mu();
  if (opts.with_psi) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      PsiTerm psi(a, x, i);
      double v = psi.norm();
      bool ev = psi.event_holds();
      r.psi_norms.push_back(v);
      r.psi_events.push_back(ev);
      sum += v;
      if (ev && v > r.psi_bound) r.psi_bound_holds = false;
    }
    r.psi_sum_holds = r.term_R <= sum * (1.0 + 1e-9) + 1e-12;
  }
  return r;
}

}  // namespace dictcert
