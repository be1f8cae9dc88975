#include <doctest.h>

#include <cmath>

#include "dictcert/certificate.hpp"
#include "dictcert/errors.hpp"
#include "dictcert/rng.hpp"

using namespace dictcert;

namespace {

Instance orthonormal_instance(int n, int p, int k, uint64_t seed) {
  return gen_instance({n, n, p, k, DictionaryKind::orthonormal, seed});
}

}  // namespace

TEST_CASE("least squares certificate") {
  Dictionary o = gen_dictionary(6, 6, DictionaryKind::orthonormal, 1);
  std::vector<int> omega{1, 4};
  Vector s(2);
  s << 1.0, -1.0;
  Vector lam = least_squares_cert(o, omega, s);
  CHECK((lam - (o.col(1) - o.col(4))).norm() < 1e-14);
  Vector corr = o.entries().transpose() * lam;
  for (int i : {0, 2, 3, 5}) CHECK(std::abs(corr(i)) < 1e-14);

  Dictionary g = gen_dictionary(8, 12, DictionaryKind::gaussian_unit, 2);
  std::vector<int> single{7};
  Vector neg = Vector::Constant(1, -1.0);
  CHECK((least_squares_cert(g, single, neg) + g.col(7)).norm() < 1e-15);

  int tested = 0;
  for (uint64_t t = 0; t < 200 && tested < 20; ++t) {
    Dictionary a = gen_dictionary(64, 70, DictionaryKind::gaussian_unit, derive_seed(3, t));
    Rng rng(derive_seed(4, t));
    std::vector<int> w = sample_k_subset(70, 1, rng);
    if (1 * a.mu() >= 0.5) continue;
    ++tested;
    Vector sg = Vector::Ones(1);
    Vector l = least_squares_cert(a, w, sg);
    Vector c = a.entries().transpose() * l;
    CHECK(std::abs(c(w[0]) - 1.0) < 1e-10);
    c(w[0]) = 0.0;
    CHECK(c.cwiseAbs().maxCoeff() <= 2.0 * a.mu() + 1e-12);
  }
  CHECK(tested > 0);
  CHECK_THROWS_AS(least_squares_cert(g, omega, Vector::Ones(3)), ValidationError);
}

TEST_CASE("least squares certificate on a singular Gram matrix") {
  Matrix a(2, 3);
  a << 1, 1, 0, 0, 0, 1;
  std::vector<int> omega{0, 1};
  CHECK_THROWS_AS(least_squares_cert(Dictionary(a), omega, Vector::Ones(2)), SingularityError);
}

TEST_CASE("deflation direction") {
  Dictionary a = gen_dictionary(10, 14, DictionaryKind::gaussian_unit, 5);
  std::vector<int> omega{2, 9};
  Vector x = Vector::Zero(14);
  x(2) = 0.7;
  x(9) = -1.3;
  CHECK(deflation_direction(a, omega, Matrix::Zero(10, 14), x).norm() == 0.0);
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    Matrix q(10, 14);
    for (Index j = 0; j < 14; ++j) {
      for (Index i = 0; i < 10; ++i) q(i, j) = rng.normal();
    }
    Vector z = deflation_direction(a, omega, q, x);
    CHECK(z.norm() == doctest::Approx(0.25).epsilon(1e-12));
    CHECK((select_columns(a.entries(), omega).transpose() * z).norm() < 1e-10);
  }
}

TEST_CASE("golfing pass") {
  Instance inst = orthonormal_instance(8, 40, 2, 7);
  PassResult single = golfing_pass(inst.dict, inst.coeffs, 5, 6, 1.0);
  CHECK(single.t_star == 1);
  std::vector<int> omega = inst.coeffs.support().col(5);
  Vector sg(2);
  sg << inst.coeffs.signs()(omega[0], 5), inst.coeffs.signs()(omega[1], 5);
  CHECK((single.lambdas.col(0) - least_squares_cert(inst.dict, omega, sg)).norm() < 1e-14);

  for (int count : {2, 3, 10, 40}) {
    PassResult pr = golfing_pass(inst.dict, inst.coeffs, 0, count, 1.3);
    CHECK(pr.t_star >= golfing_window_start(count));
    CHECK(pr.t_star <= count);
    for (int t = golfing_window_start(count); t <= count; ++t) {
      CHECK(pr.q_trajectory[static_cast<std::size_t>(pr.t_star)] <= pr.q_trajectory[static_cast<std::size_t>(t)]);
    }
    CHECK(static_cast<int>(pr.q_trajectory.size()) == count + 1);
    // Incremental residual against a dense recomputation.
    Matrix dense = phi_project(inst.dict, pr.lambdas * (1.3 * inst.coeffs.dense().leftCols(pr.t_star)).transpose());
    CHECK(dense.norm() == doctest::Approx(pr.q_trajectory[static_cast<std::size_t>(pr.t_star)]).epsilon(1e-10));
  }
  CHECK_THROWS_AS(golfing_pass(inst.dict, inst.coeffs, 3, 3, 1.0), ValidationError);
}

TEST_CASE("certificate on incoherent instances") {
  for (uint64_t s = 0; s < 5; ++s) {
    Instance inst = orthonormal_instance(16, 300, 2, derive_seed(9, s));
    CertificateState st = build_certificate(inst.dict, inst.coeffs);
    CHECK(st.warnings.empty());
    CertificateReport rep = verify_certificate(inst.dict, inst.coeffs, st.lambda, 1.0);
    CHECK(rep.interp_dev <= 1e-10);
    CHECK(rep.offsup_inf <= 0.5);
    CHECK(c_a_adjoint(inst.dict, st.residual).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((st.residual - phi_project(inst.dict, st.lambda * inst.coeffs.dense().transpose())).norm() < 1e-12);
    const int bound = static_cast<int>(std::ceil(std::log(300.0) / std::log(4.0 / 3.0))) + 2;
    CHECK(st.passes <= bound);
    CHECK(st.restart_boundaries.front() == 0);
    for (std::size_t r = 1; r < st.restart_boundaries.size(); ++r) {
      const double left = 300 - st.restart_boundaries[r];
      CHECK(left <= std::max(std::pow(0.75, static_cast<double>(r)) * 300.0, 2.0));
    }
    // Norm bound per column.
    for (int j = 0; j < 300; ++j) {
      Matrix cols = select_columns(inst.dict.entries(), inst.coeffs.support().col(j));
      Matrix pinv = cols * (cols.transpose() * cols).inverse();
      CHECK(st.lambda.col(j).norm() <= spectral_norm(pinv) * std::sqrt(2.0) + 0.25 + 1e-12);
    }
  }
}

TEST_CASE("certificate with coherent dictionary warns") {
  Instance inst = gen_instance({6, 12, 30, 3, DictionaryKind::gaussian_unit, 1});
  CertificateState st = build_certificate(inst.dict, inst.coeffs);
  CHECK_FALSE(st.warnings.empty());
  CHECK(verify_certificate(inst.dict, inst.coeffs, st.lambda, 1.0).interp_dev < 1e-9);
}

TEST_CASE("single column instance") {
  Instance inst = orthonormal_instance(5, 1, 2, 3);
  CertificateState st = build_certificate(inst.dict, inst.coeffs);
  CHECK(st.passes == 1);
  CHECK(st.lambda.cols() == 1);
}

TEST_CASE("verification detects broken certificates") {
  Instance inst = orthonormal_instance(8, 60, 2, 11);
  CertificateState st = build_certificate(inst.dict, inst.coeffs);
  CertificateReport zero = verify_certificate(inst.dict, inst.coeffs, Matrix::Zero(8, 60), 1.0);
  CHECK_FALSE(zero.interp_ok);
  CertificateReport big = verify_certificate(inst.dict, inst.coeffs, 10.0 * st.lambda, 1.0);
  CHECK_FALSE(big.offsup_ok);
  CHECK_THROWS_AS(verify_certificate(inst.dict, inst.coeffs, st.lambda, 0.0), ValidationError);
  CertificateReport tight = verify_certificate(inst.dict, inst.coeffs, st.lambda, 1e-9);
  CHECK_FALSE(tight.phi_ok);
}
