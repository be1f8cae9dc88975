#pragma once

#include <vector>

#include "dictcert/linalg.hpp"
#include "dictcert/model.hpp"

namespace dictcert {

// Matrix-free operators on the coefficient space R^{n x p}. Vectors are
// n x p matrices; vec stacks columns.
//   T     = (I - P_X) (x) A^T A + (X^T G (x) A^T) C C^T (G X (x) A)
//   R     = (X^T (x) A^T)(I - C C^T)(X (x) A)
//   T_hat = I (x) A^T A - R
// with G = (X X^T)^{-1}, P_X = X^T G X and C = C_A.
class CoefficientOperators {
 public:
  // Throws ConditioningError when lambda_min(X X^T) <= 1e-10.
  CoefficientOperators(const Dictionary& a, const Matrix& x);

  Matrix apply_T(const Matrix& z) const;
  Matrix apply_T_hat(const Matrix& z) const;
  Matrix apply_R(const Matrix& z) const;

  const Matrix& gram() const { return h_; }           // A^T A
  const Matrix& xx_inverse() const { return g_; }     // (X X^T)^{-1}
  double xx_lambda_min() const { return xx_lambda_min_; }
  double xx_lambda_max() const { return xx_lambda_max_; }

 private:
  Matrix a_;
  Matrix x_;
  Matrix h_;
  Matrix g_;
  Matrix gx_;  // G X
  double xx_lambda_min_ = 0.0;
  double xx_lambda_max_ = 0.0;
};

// Vector forms of the operators (length n*p, column-stacked).
Vector apply_T(const Dictionary& a, const SparseCoeffs& x, const Vector& z);
Vector apply_T_hat(const Dictionary& a, const SparseCoeffs& x, const Vector& z);
Vector apply_R(const Dictionary& a, const SparseCoeffs& x, const Vector& z);

// Coordinates of the support, in vec order: (i, j) -> j * n + i.
std::vector<Index> support_coordinates(const SupportPattern& s);

// Psi_i = P_Omega (x^{iT} x^i (x) A^T P_i A) P_Omega with P_i = I - A_i A_i^T.
class PsiTerm {
 public:
  // Keeps a reference to the support of x.
  PsiTerm(const Dictionary& a, const SparseCoeffs& x, int row);

  Matrix apply(const Matrix& z) const;
  // Operator norm from power iteration on the equivalent n x n form
  // D^{1/2} A^T P_i A D^{1/2}, D_a = ||x^i restricted to Omega^a||^2.
  double norm(double rel_tol = 1e-10) const;
  // max_{a != i} ||x^i P_{Omega^a}|| <= 2 sqrt(k/n) and ||x^i|| <= 2.
  bool event_holds() const;
  const Vector& row_masses() const { return d_; }

 private:
  const SupportPattern* support_;
  int row_;
  Matrix hi_;  // A^T P_i A
  Vector w_;   // x^i
  Vector d_;
};

PsiTerm psi_term(const Dictionary& a, const SparseCoeffs& x, int row);

struct BalancednessOptions {
  Index dense_limit = 4000;   // largest kp handled by dense eigenvalues
  double lanczos_tol = 1e-8;
  int lanczos_restarts = 200;
  uint64_t seed = 0x5eed;
  bool with_psi = true;
};

// P_Omega T P_Omega as a dense kp x kp matrix.
Matrix compressed_T(const Dictionary& a, const SparseCoeffs& x);
Matrix compressed_T(const CoefficientOperators& ops, const SparseCoeffs& x);
Matrix compressed_R(const CoefficientOperators& ops, const SparseCoeffs& x);

struct RestrictedSv {
  double xi = 0.0;
  bool dense = true;
  bool converged = true;
};

RestrictedSv restricted_min_sv(const Dictionary& a, const SparseCoeffs& x,
                               const BalancednessOptions& opts = {});

struct AlphaEstimate {
  double xi = 0.0;
  double offdiag_norm = 0.0;    // ||P_Omega T P_Omega^c||
  double xx_lambda_min = 0.0;
  double op_norm = 0.0;
  double alpha = 0.0;
  bool degenerate = false;
  bool dense = true;
};

// alpha = 1 / (||A|| lambda_min(XX^T)^{-1/2} (1 + ||P_Omega T P_Omega^c|| / xi)).
AlphaEstimate estimate_alpha(const Dictionary& a, const SparseCoeffs& x,
                             const BalancednessOptions& opts = {});

struct BalancednessReport {
  double xi = 0.0;
  double alpha = 0.0;
  double offdiag_norm = 0.0;
  double xx_lambda_min = 0.0;
  double term_identity = 0.0;  // min_j lambda_min(A_{Omega_j}^T A_{Omega_j})
  double term_R = 0.0;         // ||P_Omega R P_Omega||
  double term_Tdiff = 0.0;     // ||P_Omega (T - T_hat) P_Omega||
  double eig_gap = 0.0;        // ||X X^T - I||
  double xi_gap = 0.0;         // ||(X X^T)^{-1} - I||
  double block_norm_sq = 0.0;  // max_j ||A_{Omega_j}||^2
  std::vector<double> psi_norms;
  std::vector<bool> psi_events;
  double psi_bound = 0.0;      // 4k/n + 24 k mu(A)
  bool degenerate = false;
  bool dense = true;
  bool chain_holds = false;    // xi >= term_identity - term_R - term_Tdiff - 1e-8
  bool psi_sum_holds = true;   // term_R <= sum_i ||Psi_i||
  bool psi_bound_holds = true; // bound holds for every i whose event holds
};

BalancednessReport alpha_bound(const Dictionary& a, const SparseCoeffs& x,
                               const BalancednessOptions& opts = {});

}  // namespace dictcert
