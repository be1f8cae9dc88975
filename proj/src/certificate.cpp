#include "dictcert/certificate.hpp"

#include <cmath>
#include <stdexcept>

#include "dictcert/errors.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "certificate";

struct LocalGram {
  Matrix cols;  // A_Omega
  Matrix inv;   // (A_Omega^T A_Omega)^{-1}
};

LocalGram local_gram(const Dictionary& a, std::span<const int> omega, std::string_view what) {
  LocalGram g;
  g.cols = select_columns(a.entries(), omega);
  g.inv = symmetric_inverse(g.cols.transpose() * g.cols, kModule, what).inverse;
  return g;
}

void check_omega(const Dictionary& a, std::span<const int> omega) {
  if (omega.empty()) throw ValidationError(kModule, "support set must be nonempty");
  for (int i : omega) {
    if (i < 0 || i >= a.cols()) {
      throw ValidationError(kModule, "support index " + std::to_string(i) + " out of range");
    }
  }
}

Vector deflate(const LocalGram& g, const Vector& v, double threshold, double scale, bool* zero) {
  Vector theta_v = v - g.cols * (g.inv * (g.cols.transpose() * v));
  double nrm = theta_v.norm();
  if (!(nrm > threshold)) {
    if (zero) *zero = true;
    return Vector::Zero(v.size());
  }
  if (zero) *zero = false;
  return (scale / nrm) * theta_v;
}

}  // namespace

Vector least_squares_cert(const Dictionary& a, std::span<const int> omega, const Vector& signs) {
  check_omega(a, omega);
  if (signs.size() != static_cast<Index>(omega.size())) {
    throw ValidationError(kModule, "least_squares_cert: sign vector length must equal |omega|");
  }
  LocalGram g = local_gram(a, omega, "Gram submatrix A_Omega^T A_Omega");
  return g.cols * (g.inv * signs);
}

Vector deflation_direction(const Dictionary& a, std::span<const int> omega, const Matrix& q_prev,
                           const Vector& x, const CertificateOptions& opts) {
  check_omega(a, omega);
  if (q_prev.rows() != a.rows() || q_prev.cols() != a.cols() || x.size() != a.cols()) {
    throw ValidationError(kModule, "deflation_direction: shape mismatch");
  }
  LocalGram g = local_gram(a, omega, "Gram submatrix A_Omega^T A_Omega");
  Vector v = q_prev * x;
  return deflate(g, v, opts.zero_tol * q_prev.norm() * x.norm(), opts.zeta_scale, nullptr);
}

// ceil((count - 1) / 2), kept positive.
int golfing_window_start(int count) { return std::max(1, count / 2); }

PassResult golfing_pass(const Dictionary& a, const SparseCoeffs& x, int first, int last,
                        double scale, const CertificateOptions& opts) {
  if (x.n() != a.cols()) throw ValidationError(kModule, "golfing_pass: X has the wrong row count");
  if (first < 0 || last > x.p() || first >= last) {
    throw ValidationError(kModule, "golfing_pass: column range must be nonempty and in bounds");
  }
  if (!(scale > 0.0)) throw ValidationError(kModule, "golfing_pass: scale must be positive");
  const Index m = a.rows(), n = a.cols();
  const int count = last - first;
  const Matrix& am = a.entries();
  const Matrix& xd = x.dense();
  const Matrix& signs = x.signs();

  Matrix q = Matrix::Zero(m, n);
  Vector col_sq = Vector::Zero(n);
  Matrix lambdas(m, count);
  PassResult out;
  out.scale = scale;
  out.q_trajectory.assign(static_cast<std::size_t>(count) + 1, 0.0);
  out.steps.reserve(static_cast<std::size_t>(count));

  for (int t = 1; t <= count; ++t) {
    const int j = first + t - 1;
    const auto& omega = x.support().col(j);
    const Index k = static_cast<Index>(omega.size());
    LocalGram g = local_gram(a, omega, "Gram submatrix for column " + std::to_string(j));
    Vector xs(k), sg(k);
    for (Index l = 0; l < k; ++l) {
      xs(l) = scale * xd(omega[static_cast<std::size_t>(l)], j);
      sg(l) = signs(omega[static_cast<std::size_t>(l)], j);
    }
    Vector lambda = g.cols * (g.inv * sg);

    Vector v = Vector::Zero(m);
    for (Index l = 0; l < k; ++l) v += xs(l) * q.col(omega[static_cast<std::size_t>(l)]);
    double q_norm = std::sqrt(col_sq.sum());
    StepRecord rec;
    rec.column = j;
    lambda -= deflate(g, v, opts.zero_tol * q_norm * xs.norm(), opts.zeta_scale, &rec.zeta_zero);

    for (Index l = 0; l < k; ++l) {
      const int i = omega[static_cast<std::size_t>(l)];
      Vector c = xs(l) * (lambda - am.col(i) * am.col(i).dot(lambda));
      rec.energy += c.squaredNorm();
      q.col(i) += c;
      col_sq(i) = q.col(i).squaredNorm();
    }
    rec.q_norm = std::sqrt(col_sq.sum());

    Vector corr = am.transpose() * lambda;
    std::size_t on = 0;
    for (Index i = 0; i < n; ++i) {
      if (on < omega.size() && omega[on] == i) {
        ++on;
        continue;
      }
      rec.offsup_inf = std::max(rec.offsup_inf, std::abs(corr(i)));
    }
    lambdas.col(t - 1) = lambda;
    out.q_trajectory[static_cast<std::size_t>(t)] = rec.q_norm;
    out.steps.push_back(rec);
  }

  int best = count;
  for (int t = count; t >= golfing_window_start(count); --t) {
    if (out.q_trajectory[static_cast<std::size_t>(t)] <
        out.q_trajectory[static_cast<std::size_t>(best)]) {
      best = t;
    }
  }
  out.t_star = best;
  out.lambdas = lambdas.leftCols(best);
  return out;
}

CertificateState build_certificate(const Dictionary& a, const SparseCoeffs& x,
                                   const CertificateOptions& opts) {
  if (x.n() != a.cols()) throw ValidationError(kModule, "build_certificate: shape mismatch");
  const int p = x.p();
  const Index m = a.rows(), n = a.cols();
  CertificateState st;
  st.lambda.resize(m, p);
  st.per_step.resize(static_cast<std::size_t>(p));
  if (x.k() * a.mu() >= 0.125) {
    st.warnings.push_back("k*mu(A) = " + std::to_string(x.k() * a.mu()) +
                          " >= 1/8; off-support feasibility is not guaranteed");
  }
  const int max_passes =
      static_cast<int>(std::ceil(std::log(static_cast<double>(p)) / std::log(4.0 / 3.0))) + 2;

  int start = 0;
  while (start < p) {
    if (st.passes >= max_passes) {
      throw std::logic_error("[certificate] pass count exceeded its bound");
    }
    const int remaining = p - start;
    const double scale = std::sqrt(static_cast<double>(p) / remaining);
    PassResult pass = golfing_pass(a, x, start, p, scale, opts);
    st.restart_boundaries.push_back(start);
    st.lambda.middleCols(start, pass.t_star) = pass.lambdas;
    for (int t = 0; t < pass.t_star; ++t) {
      StepRecord rec = pass.steps[static_cast<std::size_t>(t)];
      rec.energy /= scale * scale;
      st.per_step[static_cast<std::size_t>(start + t)] = rec;
    }
    start += pass.t_star;
    ++st.passes;
  }

  // Cumulative residual in unscaled units.
  const Matrix& am = a.entries();
  const Matrix& xd = x.dense();
  Matrix q = Matrix::Zero(m, n);
  Vector col_sq = Vector::Zero(n);
  for (int j = 0; j < p; ++j) {
    for (int i : x.support().col(j)) {
      Vector lam = st.lambda.col(j);
      q.col(i) += xd(i, j) * (lam - am.col(i) * am.col(i).dot(lam));
      col_sq(i) = q.col(i).squaredNorm();
    }
    st.per_step[static_cast<std::size_t>(j)].q_norm = std::sqrt(col_sq.sum());
  }
  st.residual = phi_project(a, st.lambda * xd.transpose());
  return st;
}

CertificateReport verify_certificate(const Dictionary& a, const SparseCoeffs& x,
                                     const Matrix& lambda, double alpha) {
  if (!(alpha > 0.0)) throw ValidationError(kModule, "verify_certificate: alpha must be positive");
  if (lambda.rows() != a.rows() || lambda.cols() != x.p() || x.n() != a.cols()) {
    throw ValidationError(kModule, "verify_certificate: shape mismatch");
  }
  CertificateReport r;
  r.alpha = alpha;
  Matrix corr = a.entries().transpose() * lambda;
  const Matrix& signs = x.signs();
  for (Index j = 0; j < corr.cols(); ++j) {
    for (Index i = 0; i < corr.rows(); ++i) {
      if (signs(i, j) != 0.0) {
        r.interp_dev = std::max(r.interp_dev, std::abs(corr(i, j) - signs(i, j)));
      } else {
        r.offsup_inf = std::max(r.offsup_inf, std::abs(corr(i, j)));
      }
    }
  }
  r.phi_norm = phi_project(a, lambda * x.dense().transpose()).norm();
  r.interp_ok = r.interp_dev <= kInterpolationTol;
  r.offsup_ok = r.offsup_inf <= 0.5;
  r.phi_ok = r.phi_norm < alpha / 2.0;
  return r;
}

}  // namespace dictcert
