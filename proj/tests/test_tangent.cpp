#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dictcert/certificate.hpp"
#include "dictcert/errors.hpp"
#include "dictcert/rng.hpp"
#include "dictcert/tangent.hpp"

using namespace dictcert;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng) {
  Matrix z(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) z(i, j) = rng.normal();
  }
  return z;
}

// Square A: the tangent space is dA_i = K_i a_i (K_i spans A_i's orthogonal
// complement) with dX = -A^{-1} dA X. Returns vec(dX) as a function of the
// stacked a_i.
Matrix square_coeff_map(const Matrix& a, const Matrix& x) {
  const Index n = a.cols(), p = x.cols();
  Matrix ainv = a.inverse();
  Matrix map(n * p, n * (n - 1));
  for (Index i = 0; i < n; ++i) {
    Eigen::FullPivLU<Matrix> lu(a.col(i).transpose());
    Matrix k = lu.kernel();
    for (Index c = 0; c < n - 1; ++c) {
      Matrix da = Matrix::Zero(n, n);
      da.col(i) = k.col(c);
      Matrix dx = -ainv * da * x;
      map.col(i * (n - 1) + c) = Eigen::Map<const Vector>(dx.data(), dx.size());
    }
  }
  return map;
}

// min_theta ||x0 + M theta||_1 by enumerating the points where rank(M)
// independent terms vanish.
double enumerate_l1(const Matrix& m, const Vector& x0) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  const Index r = svd.rank();
  const Index rows = m.rows();
  double best = x0.lpNorm<1>();
  std::vector<int> pick(static_cast<std::size_t>(rows), 0);
  std::fill(pick.end() - r, pick.end(), 1);
  do {
    std::vector<Index> sel;
    for (Index i = 0; i < rows; ++i) {
      if (pick[static_cast<std::size_t>(i)]) sel.push_back(i);
    }
    Matrix ms(r, m.cols());
    Vector bs(r);
    for (Index t = 0; t < r; ++t) {
      ms.row(t) = m.row(sel[static_cast<std::size_t>(t)]);
      bs(t) = -x0(sel[static_cast<std::size_t>(t)]);
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ms);
    cod.setThreshold(1e-10);
    if (cod.rank() < r) continue;
    Vector theta = cod.solve(bs);
    best = std::min(best, (x0 + m * theta).lpNorm<1>());
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

// Point on the manifold along dA for a square dictionary.
double geodesic_l1(const Dictionary& a, const Matrix& y, const Matrix& da, double t) {
  Dictionary at = Dictionary::normalized(a.entries() + t * da);
  return at.entries().fullPivLu().solve(y).lpNorm<1>();
}

SparseCoeffs zero_row_coeffs(int n, int p, uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> cols;
  Matrix v = Matrix::Zero(n, p);
  for (int j = 0; j < p; ++j) {
    int i = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(n - 1)));
    cols.push_back({i});
    v(i, j) = rng.normal();
  }
  return SparseCoeffs(SupportPattern(n, 1, cols), v, 1.0);
}

}  // namespace

TEST_CASE("tangent residual") {
  Instance inst = gen_instance({6, 8, 30, 2, DictionaryKind::gaussian_unit, 3});
  const Matrix& x = inst.coeffs.dense();
  TangentPerturbation zero{Matrix::Zero(6, 8), Matrix::Zero(8, 30)};
  TangentResidual r0 = tangent_residual(inst.dict, x, zero);
  CHECK(r0.bilinear_norm == 0.0);
  CHECK(r0.diag_inf == 0.0);

  // dA by least squares from a dX whose image lies in the row space of X.
  Rng rng(4);
  Matrix w = random_matrix(8, 8, rng);
  TangentPerturbation pert;
  pert.delta_x = w * x;
  pert.delta_a = -inst.dict.entries() * pert.delta_x * x.transpose() * (x * x.transpose()).inverse();
  CHECK(tangent_residual(inst.dict, x, pert).bilinear_norm < 1e-10);

  TangentPerturbation bad{Matrix::Zero(5, 8), Matrix::Zero(8, 30)};
  CHECK_THROWS_AS(tangent_residual(inst.dict, x, bad), ValidationError);
}

TEST_CASE("RIP failure witness") {
  Instance ortho = gen_instance({8, 8, 50, 3, DictionaryKind::orthonormal, 5});
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    // Random derangement.
    std::vector<int> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      for (int i = 7; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<uint64_t>(i + 1))]);
    } while ([&] {
      for (int i = 0; i < 8; ++i) {
        if (perm[static_cast<std::size_t>(i)] == i) return true;
      }
      return false;
    }());
    RipWitness w = rip_failure_witness(ortho.dict, ortho.coeffs.dense(), perm);
    CHECK(w.residual.bilinear_norm <= 1e-14);
    CHECK(w.residual.diag_inf <= 1e-15);
    CHECK(w.same_column_sparsity);
    CHECK(tangent_feasible(ortho.dict, ortho.coeffs.dense(), w.pert, 1e-12));

    Instance g = gen_instance({6, 8, 50, 3, DictionaryKind::gaussian_unit, derive_seed(7, static_cast<uint64_t>(t))});
    RipWitness wg = rip_failure_witness(g.dict, g.coeffs.dense(), perm);
    CHECK(wg.residual.bilinear_norm <= 1e-14 * (1.0 + g.coeffs.dense().norm()));
    CHECK(wg.residual.diag_inf <= g.dict.mu() + 1e-15);
  }
  std::vector<int> fixed{1, 0, 2, 3, 4, 5, 7, 6};
  CHECK_THROWS_AS(rip_failure_witness(ortho.dict, ortho.coeffs.dense(), fixed), ValidationError);
  std::vector<int> repeat{1, 1, 3, 2, 5, 4, 7, 6};
  CHECK_THROWS_AS(rip_failure_witness(ortho.dict, ortho.coeffs.dense(), repeat), ValidationError);
}

TEST_CASE("tangent basis spans feasible directions") {
  Instance inst = gen_instance({6, 9, 40, 2, DictionaryKind::gaussian_unit, 8});
  TangentBasis basis(inst.dict, inst.coeffs.dense());
  CHECK(basis.num_params() == 9 * 5 + 3 * 40);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    Vector theta(basis.num_params());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
    TangentPerturbation pert = basis.perturbation(theta);
    CHECK(tangent_feasible(inst.dict, inst.coeffs.dense(), pert, 1e-10));
    CHECK((Eigen::Map<const Vector>(pert.delta_x.data(), pert.delta_x.size()) - basis.coeff_map() * theta).norm() < 1e-10);
  }
}

TEST_CASE("linearized solve matches enumeration at tiny scale") {
  int compared = 0;
  for (uint64_t s = 0; s < 20; ++s) {
    Instance inst = gen_instance({3, 3, 4, 1, DictionaryKind::gaussian_unit, derive_seed(10, s)});
    const Matrix& x = inst.coeffs.dense();
    const Vector x0 = Eigen::Map<const Vector>(x.data(), x.size());
    const double oracle = enumerate_l1(square_coeff_map(inst.dict.entries(), x), x0);
    for (Backend b : {Backend::lp, Backend::pd}) {
      SolverParams sp;
      sp.backend = b;
      LinearizedSolution sol = solve_linearized(inst.dict, x, sp);
      CAPTURE(s);
      CAPTURE(to_string(b));
      CHECK(sol.status == SolveStatus::optimal);
      CHECK(std::abs(sol.objective - oracle) <= 1e-9 * std::max(1.0, sol.x_l1));
      CHECK(sol.objective <= sol.x_l1 + 1e-12);
      CHECK(tangent_feasible(inst.dict, x, sol.pert, 1e-8));
      CHECK((x + sol.pert.delta_x).lpNorm<1>() == doctest::Approx(sol.objective).epsilon(1e-9));
      ++compared;
    }
  }
  CHECK(compared == 40);
}

TEST_CASE("zero row is never certified") {
  Dictionary a = gen_dictionary(4, 4, DictionaryKind::orthonormal, 11);
  SparseCoeffs x = zero_row_coeffs(4, 40, 12);
  LinearizedSolution sol = solve_linearized(a, x.dense());
  CHECK(sol.objective <= sol.x_l1 + 1e-12);
  for (bool cert : {true, false}) {
    OptimalityConfig cfg;
    cfg.use_certificate = cert;
    OptimalityVerdict v = is_local_min(a, x, cfg);
    CHECK(v.verdict != Verdict::certified_yes);
    if (v.verdict == Verdict::certified_no) {
      REQUIRE(v.improving.has_value());
      CHECK((x.dense() + v.improving->delta_x).lpNorm<1>() < x.dense().lpNorm<1>() - 1e-8);
    }
  }
}

TEST_CASE("KKT check") {
  Dictionary a = gen_dictionary(3, 3, DictionaryKind::orthonormal, 13);
  Matrix xv = Matrix::Zero(3, 1);
  xv(0, 0) = 1.0;
  SparseCoeffs x = SparseCoeffs::from_dense(xv, 1.0);
  Matrix lambda = a.col(0);
  Vector gamma = Vector::Zero(3);
  gamma(0) = 1.0;
  KktReport r = kkt_check(a, x, lambda, gamma);
  CHECK(r.all());
  CHECK(r.interp_dev <= 1e-15);
  CHECK(r.residual <= 1e-15);
  CHECK((kkt_gamma(a, lambda, xv) - gamma).norm() < 1e-15);

  Instance inst = gen_instance({16, 16, 300, 2, DictionaryKind::orthonormal, 14});
  CertificateState st = build_certificate(inst.dict, inst.coeffs);
  Vector g = kkt_gamma(inst.dict, st.lambda, inst.coeffs.dense());
  KktReport rc = kkt_check(inst.dict, inst.coeffs, st.lambda, g);
  CHECK(rc.interp_ok);
  CHECK(rc.offsup_ok);
  Matrix lxt = st.lambda * inst.coeffs.dense().transpose();
  CHECK(rc.residual == doctest::Approx(phi_project(inst.dict, lxt).norm()).epsilon(1e-9));
  Rng rng(15);
  for (int t = 0; t < 5; ++t) {
    Vector other = g;
    for (Index i = 0; i < other.size(); ++i) other(i) += 0.01 * rng.normal();
    CHECK(kkt_check(inst.dict, inst.coeffs, st.lambda, other).residual >= rc.residual);
  }
}

TEST_CASE("verdict agrees with geodesic perturbations") {
  Instance inst = gen_instance({4, 4, 60, 1, DictionaryKind::orthonormal, 16});
  OptimalityConfig cfg;
  cfg.uniqueness_samples = 100;
  cfg.seed = 17;
  OptimalityVerdict v = is_local_min(inst.dict, inst.coeffs, cfg);
  REQUIRE(v.verdict == Verdict::certified_yes);
  REQUIRE(v.sharpness.has_value());
  CHECK(*v.sharpness > 0.0);
  LinearizedSolution direct = solve_linearized(inst.dict, inst.coeffs.dense());
  CHECK(direct.objective >= direct.x_l1 - 1e-7);

  TangentBasis basis(inst.dict, inst.coeffs.dense());
  const double base = inst.coeffs.dense().lpNorm<1>();
  Rng rng(18);
  for (int t = 0; t < 100; ++t) {
    Vector theta(basis.num_params());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
    TangentPerturbation pert = basis.perturbation(theta / theta.norm());
    CHECK(geodesic_l1(inst.dict, inst.obs, pert.delta_a, 1e-3) > base);
  }

  // A zero row gives a descent direction along the manifold.
  Dictionary a = gen_dictionary(4, 4, DictionaryKind::orthonormal, 19);
  SparseCoeffs zx = zero_row_coeffs(4, 40, 20);
  OptimalityConfig direct_only;
  direct_only.use_certificate = false;
  OptimalityVerdict nv = is_local_min(a, zx, direct_only);
  if (nv.verdict == Verdict::certified_no) {
    Matrix y = a.entries() * zx.dense();
    CHECK(geodesic_l1(a, y, nv.improving->delta_a, 1e-3) < zx.dense().lpNorm<1>());
  }
}

TEST_CASE("verdict is invariant under signed permutations") {
  Instance inst = gen_instance({5, 5, 80, 1, DictionaryKind::orthonormal, 21});
  OptimalityConfig cfg;
  cfg.use_certificate = false;
  OptimalityVerdict base = is_local_min(inst.dict, inst.coeffs, cfg);
  Rng rng(22);
  for (int t = 0; t < 5; ++t) {
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 4; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<uint64_t>(i + 1))]);
    Matrix ps = Matrix::Zero(5, 5);
    for (int i = 0; i < 5; ++i) ps(perm[static_cast<std::size_t>(i)], i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Dictionary a2(inst.dict.entries() * ps);
    SparseCoeffs x2 = SparseCoeffs::from_dense(ps.transpose() * inst.coeffs.dense(), inst.coeffs.sigma());
    OptimalityVerdict v = is_local_min(a2, x2, cfg);
    CHECK(v.verdict == base.verdict);
    CHECK(v.objective == doctest::Approx(base.objective).epsilon(1e-9));
  }
}
