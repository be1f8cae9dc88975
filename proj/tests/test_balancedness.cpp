#include <doctest.h>

#include <cmath>

#include "dictcert/balancedness.hpp"
#include "dictcert/errors.hpp"
#include "dictcert/rng.hpp"
#include "dictcert/tangent.hpp"

using namespace dictcert;

namespace {

Matrix kron(const Matrix& l, const Matrix& r) {
  Matrix out(l.rows() * r.rows(), l.cols() * r.cols());
  for (Index i = 0; i < l.rows(); ++i) {
    for (Index j = 0; j < l.cols(); ++j) out.block(i * r.rows(), j * r.cols(), r.rows(), r.cols()) = l(i, j) * r;
  }
  return out;
}

Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

struct DenseOps {
  Matrix t, t_hat, r;
};

// Kronecker assembly with C_A as an explicit mn x n matrix.
DenseOps dense_ops(const Matrix& a, const Matrix& x) {
  const Index m = a.rows(), n = a.cols(), p = x.cols();
  Matrix g = (x * x.transpose()).inverse();
  Matrix px = x.transpose() * g * x;
  Matrix h = a.transpose() * a;
  Matrix c = Matrix::Zero(m * n, n);
  for (Index i = 0; i < n; ++i) c.block(i * m, i, m, 1) = a.col(i);
  Matrix cc = c * c.transpose();
  Matrix b = kron(x, a);
  DenseOps d;
  d.t = kron(Matrix::Identity(p, p) - px, h) + kron(x.transpose() * g, a.transpose()) * cc * kron(g * x, a);
  d.r = b.transpose() * (Matrix::Identity(m * n, m * n) - cc) * b;
  d.t_hat = kron(Matrix::Identity(p, p), h) - d.r;
  return d;
}

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix z(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) z(i, j) = rng.normal();
  }
  return z;
}

Matrix restrict(const Matrix& full, const std::vector<Index>& coords) {
  const Index d = static_cast<Index>(coords.size());
  Matrix out(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) out(i, j) = full(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace

TEST_CASE("operators agree with dense Kronecker assembly") {
  Instance inst = gen_instance({4, 4, 6, 2, DictionaryKind::gaussian_unit, 21});
  const Matrix& a = inst.dict.entries();
  const Matrix& x = inst.coeffs.dense();
  DenseOps d = dense_ops(a, x);
  CoefficientOperators ops(inst.dict, x);
  Rng rng(22);
  for (int t = 0; t < 5; ++t) {
    Matrix z = random_matrix(4, 6, rng);
    CHECK((vec(ops.apply_T(z)) - d.t * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
    CHECK((vec(ops.apply_T_hat(z)) - d.t_hat * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
    CHECK((vec(ops.apply_R(z)) - d.r * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
    CHECK((apply_T(inst.dict, inst.coeffs, vec(z)) - d.t * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
    CHECK((apply_R(inst.dict, inst.coeffs, vec(z)) - d.r * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
    CHECK((apply_T_hat(inst.dict, inst.coeffs, vec(z)) - d.t_hat * vec(z)).norm() <= 1e-10 * (1.0 + z.norm()));
  }
  const auto coords = support_coordinates(inst.coeffs.support());
  CHECK((compressed_T(inst.dict, inst.coeffs) - restrict(d.t, coords)).norm() < 1e-10);
  CHECK((compressed_R(ops, inst.coeffs) - restrict(d.r, coords)).norm() < 1e-10);
}

TEST_CASE("operator identities and positivity") {
  Instance inst = gen_instance({12, 12, 60, 3, DictionaryKind::gaussian_unit, 31});
  CoefficientOperators ops(inst.dict, inst.coeffs.dense());
  Rng rng(32);
  for (int t = 0; t < 100; ++t) {
    Matrix z = random_matrix(12, 60, rng);
    Matrix tz = ops.apply_T(z), rz = ops.apply_R(z);
    CHECK((z.array() * tz.array()).sum() >= -1e-10 * z.squaredNorm());
    CHECK((z.array() * rz.array()).sum() >= -1e-10 * z.squaredNorm());
    CHECK((ops.apply_T_hat(z) + rz - ops.gram() * z).norm() <= 1e-10 * z.norm());
  }
}

TEST_CASE("witness lies in the kernel of T") {
  Instance inst = gen_instance({6, 6, 30, 2, DictionaryKind::orthonormal, 41});
  std::vector<int> perm{1, 2, 3, 4, 5, 0};
  RipWitness w = rip_failure_witness(inst.dict, inst.coeffs.dense(), perm);
  CoefficientOperators ops(inst.dict, inst.coeffs.dense());
  CHECK(ops.apply_T(w.pert.delta_x).norm() <= 1e-10 * w.pert.delta_x.norm());
}

TEST_CASE("ill-conditioned X is rejected") {
  Dictionary a = gen_dictionary(4, 4, DictionaryKind::orthonormal, 1);
  Matrix x = Matrix::Zero(4, 6);
  x.row(0).setOnes();
  CHECK_THROWS_AS(CoefficientOperators(a, x), ConditioningError);
}

TEST_CASE("psi terms") {
  Instance inst = gen_instance({8, 8, 40, 2, DictionaryKind::gaussian_unit, 51});
  CoefficientOperators ops(inst.dict, inst.coeffs.dense());
  const auto coords = support_coordinates(inst.coeffs.support());
  Rng rng(52);
  Matrix z = random_matrix(8, 40, rng);
  Matrix masked = Matrix::Zero(8, 40);
  for (Index c : coords) masked.data()[c] = z.data()[c];
  Matrix sum = Matrix::Zero(8, 40);
  std::vector<PsiTerm> terms;
  for (int i = 0; i < 8; ++i) terms.push_back(psi_term(inst.dict, inst.coeffs, i));
  for (const PsiTerm& t : terms) sum += t.apply(z);
  Matrix rz = ops.apply_R(masked);
  Matrix expect = Matrix::Zero(8, 40);
  for (Index c : coords) expect.data()[c] = rz.data()[c];
  CHECK((sum - expect).norm() <= 1e-9 * (1.0 + expect.norm()));

  // Norm against a dense eigen-solve of the compressed term.
  const Index dim = static_cast<Index>(coords.size());
  for (int i : {0, 5}) {
    Matrix dense(dim, dim);
    for (Index c = 0; c < dim; ++c) {
      Matrix e = Matrix::Zero(8, 40);
      e.data()[coords[static_cast<std::size_t>(c)]] = 1.0;
      Matrix col = terms[static_cast<std::size_t>(i)].apply(e);
      for (Index r = 0; r < dim; ++r) dense(r, c) = col.data()[coords[static_cast<std::size_t>(r)]];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(dense);
    CHECK(terms[static_cast<std::size_t>(i)].norm() == doctest::Approx(eig.eigenvalues().maxCoeff()).epsilon(1e-8));
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("psi term vanishes on an empty row") {
  Dictionary a = gen_dictionary(4, 4, DictionaryKind::orthonormal, 61);
  std::vector<std::vector<int>> cols{{1, 2}, {1, 3}, {2, 3}, {1, 2}, {1, 3}};
  Matrix v = Matrix::Zero(4, 5);
  for (int j = 0; j < 5; ++j) {
    for (int i : cols[static_cast<std::size_t>(j)]) v(i, j) = 0.3 + 0.1 * i + 0.05 * j;
  }
  SparseCoeffs x(SupportPattern(4, 2, cols), v, 1.0);
  PsiTerm t = psi_term(a, x, 0);
  CHECK(t.norm() == 0.0);
  Rng rng(62);
  CHECK(t.apply(random_matrix(4, 5, rng)).norm() == 0.0);
}

TEST_CASE("restricted singular value") {
  Instance inst = gen_instance({4, 4, 8, 1, DictionaryKind::gaussian_unit, 71});
  DenseOps d = dense_ops(inst.dict.entries(), inst.coeffs.dense());
  const auto coords = support_coordinates(inst.coeffs.support());
  Eigen::JacobiSVD<Matrix> svd(restrict(d.t, coords));
  RestrictedSv sv = restricted_min_sv(inst.dict, inst.coeffs);
  CHECK(sv.dense);
  CHECK(std::abs(sv.xi - svd.singularValues().minCoeff()) <= 1e-8);

  // Iterative path on the same operator.
  Instance big = gen_instance({8, 8, 120, 2, DictionaryKind::orthonormal, 72});
  BalancednessOptions iter;
  iter.dense_limit = 10;
  RestrictedSv it = restricted_min_sv(big.dict, big.coeffs, iter);
  RestrictedSv dn = restricted_min_sv(big.dict, big.coeffs);
  CHECK_FALSE(it.dense);
  CHECK(it.converged);
  CHECK(std::abs(it.xi - dn.xi) <= 1e-6 * std::max(1.0, dn.xi));
}

TEST_CASE("healthy instances") {
  int tested = 0;
  for (uint64_t s = 0; s < 10; ++s) {
    Instance inst = gen_incoherent_instance({8, 8, 512, 1, DictionaryKind::gaussian_unit, derive_seed(81, s)}, 0.5, 5000);
    BalancednessReport r = alpha_bound(inst.dict, inst.coeffs);
    ++tested;
    CHECK(r.xi > 0.25);
    CHECK(r.term_identity >= 1.0 - inst.dict.mu() - 1e-12);
    CHECK(r.chain_holds);
    CHECK(r.psi_sum_holds);
    CHECK(r.psi_bound_holds);
    if (r.eig_gap < 0.1) CHECK(r.term_Tdiff <= 12.0 * r.xi_gap + 1e-10);
    AlphaEstimate e = estimate_alpha(inst.dict, inst.coeffs);
    CHECK(e.alpha == doctest::Approx(r.alpha).epsilon(1e-9));
  }
  CHECK(tested == 10);
}

TEST_CASE("alpha lower-bounds off-support tangent mass") {
  Instance inst = gen_incoherent_instance({8, 8, 200, 1, DictionaryKind::gaussian_unit, 91}, 0.5, 5000);
  AlphaEstimate e = estimate_alpha(inst.dict, inst.coeffs);
  REQUIRE_FALSE(e.degenerate);
  TangentBasis basis(inst.dict, inst.coeffs.dense());
  Rng rng(92);
  for (int t = 0; t < 100; ++t) {
    Vector theta(basis.num_params());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
    TangentPerturbation pert = basis.perturbation(theta);
    CHECK(tangent_feasible(inst.dict, inst.coeffs.dense(), pert, 1e-10));
    Matrix off = pert.delta_x;
    for (int j = 0; j < 200; ++j) {
      for (int i : inst.coeffs.support().col(j)) off(i, j) = 0.0;
    }
    CHECK(off.norm() >= e.alpha * pert.delta_a.norm() * (1.0 - 1e-6));
  }
}
