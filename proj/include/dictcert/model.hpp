#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dictcert/linalg.hpp"

namespace dictcert {

enum class DictionaryKind { gaussian_unit, orthonormal };

std::string to_string(DictionaryKind kind);
DictionaryKind parse_dictionary_kind(const std::string& s);

Dictionary gen_dictionary(Index m, Index n, DictionaryKind kind, uint64_t seed);

// Column supports Omega_j (sorted k-subsets of [n]) with the transposed
// row index Omega^i = { j : i in Omega_j }.
class SupportPattern {
 public:
  SupportPattern() = default;
  SupportPattern(int n, int k, std::vector<std::vector<int>> col_supports);

  int n() const { return n_; }
  int p() const { return static_cast<int>(cols_.size()); }
  int k() const { return k_; }
  const std::vector<int>& col(int j) const { return cols_[static_cast<std::size_t>(j)]; }
  const std::vector<int>& row(int i) const { return rows_[static_cast<std::size_t>(i)]; }
  const std::vector<std::vector<int>>& col_supports() const { return cols_; }
  const std::vector<std::vector<int>>& row_supports() const { return rows_; }
  bool contains(int i, int j) const;

  bool operator==(const SupportPattern& other) const = default;

 private:
  int n_ = 0;
  int k_ = 0;
  std::vector<std::vector<int>> cols_;
  std::vector<std::vector<int>> rows_;
};

// Sparse coefficient matrix X = P_Omega[V] stored densely with its support
// and sign pattern.
class SparseCoeffs {
 public:
  SparseCoeffs() = default;
  // `values` must be zero off the support and nonzero on it.
  SparseCoeffs(SupportPattern support, Matrix values, double sigma);
  // Reads the support from the nonzeros of x; every column must have the
  // same number of nonzeros.
  static SparseCoeffs from_dense(const Matrix& x, double sigma);

  const SupportPattern& support() const { return support_; }
  const Matrix& dense() const { return values_; }
  const Matrix& signs() const { return signs_; }
  double sigma() const { return sigma_; }
  int n() const { return support_.n(); }
  int p() const { return support_.p(); }
  int k() const { return support_.k(); }

 private:
  SupportPattern support_;
  Matrix values_;
  Matrix signs_;
  double sigma_ = 0.0;
};

double model_sigma(int n, int p, int k);

// Uniform k-subset of [n] by partial Fisher-Yates, returned sorted.
std::vector<int> sample_k_subset(int n, int k, class Rng& rng);

SparseCoeffs gen_coefficients(int n, int p, int k, uint64_t seed);

struct Instance {
  Dictionary dict;
  SparseCoeffs coeffs;
  Matrix obs;
  uint64_t seed = 0;
};

Matrix observe(const Dictionary& a, const Matrix& x);
Instance observe(const Dictionary& a, const SparseCoeffs& x, uint64_t seed = 0);

struct InstanceParams {
  int m = 0;
  int n = 0;
  int p = 0;
  int k = 0;
  DictionaryKind kind = DictionaryKind::gaussian_unit;
  uint64_t seed = 0;
};

// Dictionary from derive_seed(seed, 0), coefficients from derive_seed(seed, 1).
Instance gen_instance(const InstanceParams& params);

// Draws instances with seeds derive_seed(seed, attempt) until k mu(A) < limit.
// Returns the instance and the attempt count; throws after max_attempts.
Instance gen_incoherent_instance(const InstanceParams& params, double k_mu_limit,
                                 int max_attempts, int* attempts = nullptr);

struct DesirableSupportReport {
  int max_row = 0;
  int max_pair = 0;
  double row_limit = 0.0;
  double pair_limit = 0.0;
  bool in_O = false;
};

DesirableSupportReport is_desirable_support(const SupportPattern& s);

// Directory with A.mat, X.mat, Y.mat and instance.json.
void save_instance(const Instance& inst, const std::filesystem::path& dir);
Instance load_instance(const std::filesystem::path& dir);

}  // namespace dictcert
