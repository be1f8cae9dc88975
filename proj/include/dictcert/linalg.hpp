#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace dictcert {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Dense m x n matrix with unit-norm columns. Coherence and spectral norm are
// computed once at construction.
class Dictionary {
 public:
  // Validates unit columns (relative tolerance 1e-9).
  explicit Dictionary(Matrix entries);
  // Rescales every column to unit length first. Zero columns are rejected.
  static Dictionary normalized(Matrix entries);

  const Matrix& entries() const { return entries_; }
  Index rows() const { return entries_.rows(); }
  Index cols() const { return entries_.cols(); }
  double mu() const { return mu_; }
  double op_norm() const { return op_norm_; }
  auto col(Index i) const { return entries_.col(i); }

 private:
  Dictionary(Matrix entries, bool);
  Matrix entries_;
  double mu_ = 0.0;
  double op_norm_ = 0.0;
};

inline constexpr double kUnitColumnInputTol = 1e-9;

// max_{i != j} |<A_i, A_j>|.
double mutual_coherence(const Matrix& a);

// Column i becomes (I - A_i A_i^T) M_i.
Matrix phi_project(const Dictionary& a, const Matrix& m);
// A diag(z).
Matrix c_a_apply(const Dictionary& a, const Vector& z);
// Entry i is <A_i, U_i>.
Vector c_a_adjoint(const Dictionary& a, const Matrix& u);

struct GramSubmatrixReport {
  std::vector<int> subset;
  double smax_sq = 0.0;      // ||A_L||^2
  double smin = 0.0;         // lambda_min(A_L^T A_L)
  double inv_norm = 0.0;     // ||(A_L^T A_L)^{-1}||
  double neumann_dev = 0.0;  // ||(A_L^T A_L)^{-1} - I||_F
  double k_mu = 0.0;
  bool upper_holds = false;    // smax_sq <= 1 + k mu
  bool lower_holds = false;    // smin >= 1 - k mu
  bool inverse_holds = true;   // inv_norm <= 2 when k mu < 1/2
  bool neumann_holds = true;   // neumann_dev < 2 k mu when k mu < 1/2
};

GramSubmatrixReport gram_submatrix_report(const Dictionary& a, std::span<const int> subset);

// Inverse of a small symmetric positive definite matrix through its
// eigendecomposition. Throws SingularityError when lambda_min is not
// positive relative to lambda_max.
struct SymmetricInverse {
  Matrix inverse;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};
SymmetricInverse symmetric_inverse(const Matrix& s, std::string_view module, std::string_view what);

// Columns of A indexed by `subset`.
Matrix select_columns(const Matrix& a, std::span<const int> subset);

double spectral_norm(const Matrix& m);

using LinearOperator = std::function<void(const Vector& in, Vector& out)>;

struct EigenEstimate {
  double value = 0.0;
  Vector vector;
  int iterations = 0;
  bool converged = false;
};

// Largest eigenvalue of a symmetric positive semidefinite operator. Stops
// when the Rayleigh quotient changes by less than rel_tol.
EigenEstimate power_iteration(const LinearOperator& op, Index dim, double rel_tol, int max_iter,
                              uint64_t seed);

// Smallest eigenvalue of a symmetric operator by restarted Lanczos with full
// reorthogonalization. Converged when the Ritz residual is below
// tol * max(1, |largest Ritz value|).
EigenEstimate lanczos_smallest(const LinearOperator& op, Index dim, double tol, int max_restarts,
                               uint64_t seed);

}  // namespace dictcert
