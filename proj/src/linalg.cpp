#include "dictcert/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dictcert/errors.hpp"
#include "dictcert/rng.hpp"

namespace dictcert {

namespace {

constexpr std::string_view kModule = "core_linalg";

void check_unit_columns(const Matrix& a, double tol) {
  for (Index i = 0; i < a.cols(); ++i) {
    double norm = a.col(i).norm();
    if (!(std::abs(norm - 1.0) <= tol)) {
      throw ValidationError(kModule, "column " + std::to_string(i) + " has norm " +
                                         std::to_string(norm) + ", expected unit norm");
    }
  }
}

// Plain sequential dot product; its value does not depend on memory
// alignment, so coherence is exactly invariant under column permutation.
double plain_dot(const double* x, const double* y, Index len) {
  double s = 0.0;
  for (Index r = 0; r < len; ++r) s += x[r] * y[r];
  return s;
}

double coherence_unchecked(const Matrix& a) {
  double mu = 0.0;
  const Index m = a.rows();
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = i + 1; j < a.cols(); ++j) {
      mu = std::max(mu, std::abs(plain_dot(a.col(i).data(), a.col(j).data(), m)));
    }
  }
  return mu;
}

void check_same_shape(const Dictionary& a, const Matrix& m, std::string_view op) {
  if (m.rows() != a.rows() || m.cols() != a.cols()) {
    throw ValidationError(kModule, std::string(op) + ": expected a " + std::to_string(a.rows()) +
                                       "x" + std::to_string(a.cols()) + " matrix, got " +
                                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

Dictionary::Dictionary(Matrix entries) : Dictionary(std::move(entries), true) {
  check_unit_columns(entries_, kUnitColumnInputTol);
}

Dictionary::Dictionary(Matrix entries, bool) : entries_(std::move(entries)) {
  if (entries_.rows() == 0 || entries_.cols() == 0) {
    throw ValidationError(kModule, "dictionary must be nonempty");
  }
  if (!entries_.allFinite()) throw ValidationError(kModule, "dictionary has non-finite entries");
  mu_ = coherence_unchecked(entries_);
  op_norm_ = spectral_norm(entries_);
}

Dictionary Dictionary::normalized(Matrix entries) {
  for (Index i = 0; i < entries.cols(); ++i) {
    double norm = entries.col(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw ValidationError(kModule, "column " + std::to_string(i) + " cannot be normalized");
    }
    entries.col(i) /= norm;
  }
  return Dictionary(std::move(entries), true);
}

double mutual_coherence(const Matrix& a) {
  check_unit_columns(a, kUnitColumnInputTol);
  return coherence_unchecked(a);
}

Matrix phi_project(const Dictionary& a, const Matrix& m) {
  check_same_shape(a, m, "phi_project");
  Matrix out = m;
  for (Index i = 0; i < m.cols(); ++i) {
    out.col(i) -= a.col(i) * a.col(i).dot(m.col(i));
  }
  return out;
}

Matrix c_a_apply(const Dictionary& a, const Vector& z) {
  if (z.size() != a.cols()) {
    throw ValidationError(kModule, "c_a_apply: vector length " + std::to_string(z.size()) +
                                       " does not match column count " + std::to_string(a.cols()));
  }
  return a.entries() * z.asDiagonal();
}

Vector c_a_adjoint(const Dictionary& a, const Matrix& u) {
  check_same_shape(a, u, "c_a_adjoint");
  return a.entries().cwiseProduct(u).colwise().sum().transpose();
}

Matrix select_columns(const Matrix& a, std::span<const int> subset) {
  Matrix out(a.rows(), static_cast<Index>(subset.size()));
  for (std::size_t c = 0; c < subset.size(); ++c) out.col(static_cast<Index>(c)) = a.col(subset[c]);
  return out;
}

SymmetricInverse symmetric_inverse(const Matrix& s, std::string_view module,
                                   std::string_view what) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  if (eig.info() != Eigen::Success) {
    throw NumericalError(module, std::string(what) + ": eigendecomposition failed");
  }
  const Vector& w = eig.eigenvalues();
  SymmetricInverse out;
  out.lambda_min = w(0);
  out.lambda_max = w(w.size() - 1);
  if (!(out.lambda_min > 1e-12 * std::max(1.0, out.lambda_max))) {
    throw SingularityError(module, std::string(what) + " is singular (lambda_min = " +
                                       std::to_string(out.lambda_min) + ")");
  }
  const Matrix& v = eig.eigenvectors();
  out.inverse = v * w.cwiseInverse().asDiagonal() * v.transpose();
  return out;
}

GramSubmatrixReport gram_submatrix_report(const Dictionary& a, std::span<const int> subset) {
  if (subset.empty()) throw ValidationError(kModule, "gram_submatrix_report: empty index set");
  std::vector<int> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError(kModule, "gram_submatrix_report: repeated index");
  }
  for (int i : sorted) {
    if (i < 0 || i >= a.cols()) {
      throw ValidationError(kModule, "gram_submatrix_report: index " + std::to_string(i) +
                                         " out of range");
    }
  }
  Matrix al = select_columns(a.entries(), subset);
  Matrix gram = al.transpose() * al;
  SymmetricInverse inv = symmetric_inverse(gram, kModule, "Gram submatrix");

  GramSubmatrixReport r;
  r.subset.assign(subset.begin(), subset.end());
  r.smax_sq = inv.lambda_max;
  r.smin = inv.lambda_min;
  r.inv_norm = 1.0 / inv.lambda_min;
  r.neumann_dev = (inv.inverse - Matrix::Identity(gram.rows(), gram.cols())).norm();
  const double k = static_cast<double>(subset.size());
  r.k_mu = k * a.mu();
  constexpr double slack = 1e-12;
  r.upper_holds = r.smax_sq <= 1.0 + r.k_mu + slack;
  r.lower_holds = r.smin >= 1.0 - r.k_mu - slack;
  if (r.k_mu < 0.5) {
    r.inverse_holds = r.inv_norm <= 2.0 + slack;
    r.neumann_holds = r.neumann_dev < 2.0 * r.k_mu + slack;
  }
  return r;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Matrix small = m.rows() <= m.cols() ? Matrix(m * m.transpose()) : Matrix(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(small, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

namespace {

Vector random_unit(Index dim, uint64_t seed) {
  Rng rng(seed);
  Vector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = rng.normal();
  return v / v.norm();
}

}  // namespace

EigenEstimate power_iteration(const LinearOperator& op, Index dim, double rel_tol, int max_iter,
                              uint64_t seed) {
  EigenEstimate est;
  if (dim == 0) {
    est.converged = true;
    return est;
  }
  Vector v = random_unit(dim, seed);
  Vector w(dim);
  double prev = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    op(v, w);
    double rq = v.dot(w);
    double wn = w.norm();
    est.iterations = it;
    est.value = rq;
    if (wn == 0.0) {
      est.value = 0.0;
      est.vector = v;
      est.converged = true;
      return est;
    }
    if (prev >= 0.0 && std::abs(rq - prev) <= rel_tol * std::abs(rq)) {
      est.vector = v;
      est.converged = true;
      return est;
    }
    prev = rq;
    v = w / wn;
  }
  est.vector = v;
  return est;
}

EigenEstimate lanczos_smallest(const LinearOperator& op, Index dim, double tol, int max_restarts,
                               uint64_t seed) {
  EigenEstimate est;
  if (dim == 0) {
    est.converged = true;
    return est;
  }
  const Index basis_size = std::min<Index>(dim, 160);
  Vector start = random_unit(dim, seed);
  Matrix basis(dim, basis_size);
  Vector w(dim);
  for (int restart = 0; restart <= max_restarts; ++restart) {
    Vector alpha = Vector::Zero(basis_size);
    Vector beta = Vector::Zero(basis_size);
    basis.col(0) = start;
    Index used = basis_size;
    for (Index j = 0; j < basis_size; ++j) {
      op(basis.col(j), w);
      ++est.iterations;
      alpha(j) = basis.col(j).dot(w);
      // Full reorthogonalization, applied twice.
      for (int pass = 0; pass < 2; ++pass) {
        Vector c = basis.leftCols(j + 1).transpose() * w;
        w -= basis.leftCols(j + 1) * c;
      }
      if (j + 1 == basis_size) break;
      beta(j) = w.norm();
      if (beta(j) <= 1e-14 * std::max(1.0, std::abs(alpha(j)))) {
        used = j + 1;
        break;
      }
      basis.col(j + 1) = w / beta(j);
    }
    Matrix tri = Matrix::Zero(used, used);
    for (Index j = 0; j < used; ++j) {
      tri(j, j) = alpha(j);
      if (j + 1 < used) tri(j, j + 1) = tri(j + 1, j) = beta(j);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(tri);
    Vector ritz = basis.leftCols(used) * eig.eigenvectors().col(0);
    ritz /= ritz.norm();
    double theta = eig.eigenvalues()(0);
    op(ritz, w);
    double residual = (w - theta * ritz).norm();
    double scale = std::max(1.0, std::abs(eig.eigenvalues()(used - 1)));
    est.value = theta;
    est.vector = ritz;
    if (residual <= tol * scale || used == dim) {
      est.converged = true;
      return est;
    }
    start = ritz;
    if (used < basis_size) {
      // Krylov space became invariant; perturb to leave it.
      start += 1e-3 * random_unit(dim, derive_seed(seed, static_cast<uint64_t>(restart) + 1));
      start /= start.norm();
    }
  }
  return est;
}

}  // namespace dictcert
