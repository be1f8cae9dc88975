#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dictcert/errors.hpp"
#include "dictcert/model.hpp"
#include "dictcert/rng.hpp"

using namespace dictcert;

TEST_CASE("dictionary generation") {
  Dictionary o = gen_dictionary(4, 4, DictionaryKind::orthonormal, 3);
  CHECK(o.mu() < 1e-15);
  CHECK((o.entries().transpose() * o.entries() - Matrix::Identity(4, 4)).norm() < 1e-14);
  CHECK(gen_dictionary(8, 12, DictionaryKind::gaussian_unit, 4).entries() ==
        gen_dictionary(8, 12, DictionaryKind::gaussian_unit, 4).entries());
  CHECK(gen_dictionary(8, 12, DictionaryKind::gaussian_unit, 4).entries() !=
        gen_dictionary(8, 12, DictionaryKind::gaussian_unit, 5).entries());
  CHECK_THROWS_AS(gen_dictionary(3, 4, DictionaryKind::orthonormal, 1), ValidationError);
  CHECK_THROWS_AS(gen_dictionary(5, 4, DictionaryKind::gaussian_unit, 1), ValidationError);
  CHECK_THROWS_AS(parse_dictionary_kind("bernoulli"), ValidationError);
}

TEST_CASE("coherence calibration of gaussian dictionaries") {
  std::vector<double> mus;
  for (uint64_t s = 0; s < 50; ++s) {
    mus.push_back(gen_dictionary(64, 128, DictionaryKind::gaussian_unit, s).mu());
  }
  std::sort(mus.begin(), mus.end());
  const double median = 0.5 * (mus[24] + mus[25]);
  // Measured: median about 0.49, every draw inside [0.4, 0.65].
  CHECK(median > 0.1);
  CHECK(median < 0.6);
}

TEST_CASE("coefficient generation") {
  SparseCoeffs x = gen_coefficients(6, 4, 2, 9);
  CHECK(x.sigma() == doctest::Approx(std::sqrt(6.0 / 8.0)));
  for (int j = 0; j < 4; ++j) {
    CHECK((x.dense().col(j).array() != 0.0).count() == 2);
    CHECK(x.support().col(j).size() == 2);
  }
  CHECK(x.sigma() * x.sigma() * 2 * 4 == doctest::Approx(6.0));

  SparseCoeffs full = gen_coefficients(5, 7, 5, 2);
  CHECK((full.dense().array() != 0.0).all());

  CHECK_THROWS_AS(gen_coefficients(4, 3, 0, 1), ValidationError);
  CHECK_THROWS_AS(gen_coefficients(4, 3, 5, 1), ValidationError);
  CHECK(gen_coefficients(6, 20, 3, 77).dense() == gen_coefficients(6, 20, 3, 77).dense());
}

TEST_CASE("support pattern invariants and dense round trip") {
  SparseCoeffs x = gen_coefficients(7, 30, 3, 21);
  const SupportPattern& s = x.support();
  std::size_t total = 0;
  for (int i = 0; i < 7; ++i) {
    total += s.row(i).size();
    for (int j : s.row(i)) CHECK(s.contains(i, j));
  }
  CHECK(total == 3u * 30u);
  for (int j = 0; j < 30; ++j) {
    const auto& c = s.col(j);
    CHECK(std::adjacent_find(c.begin(), c.end()) == c.end());
    CHECK(std::is_sorted(c.begin(), c.end()));
  }
  SparseCoeffs back = SparseCoeffs::from_dense(x.dense(), x.sigma());
  CHECK(back.support() == s);
  CHECK(back.signs() == x.signs());

  CHECK_THROWS_AS(SupportPattern(3, 2, {{0, 0}}), ValidationError);
  CHECK_THROWS_AS(SupportPattern(3, 2, {{0}}), ValidationError);
  CHECK_THROWS_AS(SupportPattern(3, 1, {{3}}), ValidationError);
}

TEST_CASE("mean squared Frobenius norm matches n") {
  const int n = 6, p = 40, k = 2, trials = 10000;
  double sum = 0.0;
  Matrix gram = Matrix::Zero(n, n);
  for (int t = 0; t < trials; ++t) {
    SparseCoeffs x = gen_coefficients(n, p, k, derive_seed(123, t));
    sum += x.dense().squaredNorm();
    gram += x.dense() * x.dense().transpose();
  }
  CHECK(std::abs(sum / trials - n) / n < 0.02);
  gram /= trials;
  CHECK((gram - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("k-subset sampling is uniform") {
  Rng rng(31);
  std::map<std::vector<int>, int> counts;
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) ++counts[sample_k_subset(5, 2, rng)];
  CHECK(counts.size() == 10);
  for (const auto& [subset, c] : counts) {
    CHECK(std::abs(static_cast<double>(c) / draws - 0.1) < 0.01);
  }
}

TEST_CASE("observation") {
  Dictionary a = gen_dictionary(5, 8, DictionaryKind::gaussian_unit, 1);
  CHECK(observe(a, Matrix::Zero(8, 3)).norm() == 0.0);
  SparseCoeffs x = gen_coefficients(8, 12, 2, 3);
  Instance inst = observe(a, x);
  CHECK((inst.obs - a.entries() * x.dense()).norm() / inst.obs.norm() < 1e-12);
  Dictionary o = gen_dictionary(8, 8, DictionaryKind::orthonormal, 2);
  CHECK(observe(o, x).obs.norm() == doctest::Approx(x.dense().norm()).epsilon(1e-12));
  CHECK_THROWS_AS(observe(a, Matrix::Zero(7, 3)), ValidationError);
}

TEST_CASE("desirable supports") {
  SparseCoeffs full = gen_coefficients(4, 10, 4, 1);
  DesirableSupportReport r = is_desirable_support(full.support());
  CHECK(r.max_row == 10);
  CHECK(r.max_pair == 10);
  CHECK(r.in_O);

  SupportPattern tiny(2, 1, {{0}, {0}});
  DesirableSupportReport t = is_desirable_support(tiny);
  CHECK(t.max_row == 2);
  CHECK(t.row_limit == doctest::Approx(1.5));
  CHECK_FALSE(t.in_O);

  int hits = 0;
  for (int s = 0; s < 1000; ++s) {
    hits += is_desirable_support(gen_coefficients(32, 2048, 4, derive_seed(8, s)).support()).in_O;
  }
  CHECK(hits >= 990);
}

TEST_CASE("incoherent instance resampling") {
  int attempts = 0;
  Instance inst = gen_incoherent_instance({16, 16, 50, 1, DictionaryKind::gaussian_unit, 4}, 0.9,
                                          10000, &attempts);
  CHECK(inst.dict.mu() < 0.9);
  CHECK(attempts >= 1);
}

TEST_CASE("instance directory round trip") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "dictcert_model_test";
  fs::remove_all(dir);
  Instance inst = gen_instance({6, 9, 14, 2, DictionaryKind::gaussian_unit, 55});
  save_instance(inst, dir);
  CHECK(fs::exists(dir / "A.mat"));
  CHECK(fs::exists(dir / "X.mat"));
  CHECK(fs::exists(dir / "Y.mat"));
  std::ifstream in(dir / "instance.json");
  nlohmann::json j = nlohmann::json::parse(in);
  for (const char* key : {"n", "m", "p", "k", "seed", "sigma", "mu"}) CHECK(j.contains(key));
  Instance back = load_instance(dir);
  CHECK(back.dict.entries() == inst.dict.entries());
  CHECK(back.coeffs.dense() == inst.coeffs.dense());
  CHECK(back.obs == inst.obs);
  CHECK(back.seed == inst.seed);
  fs::remove_all(dir);
}
