#pragma once

#include <span>
#include <string>
#include <vector>

#include "dictcert/linalg.hpp"
#include "dictcert/model.hpp"

namespace dictcert {

struct CertificateOptions {
  // Length of the deflation direction.
  double zeta_scale = 0.25;
  // ||Theta Q x|| <= zero_tol * ||Q||_F * ||x|| selects the zero direction.
  double zero_tol = 1e-12;
};

struct StepRecord {
  int column = 0;
  double q_norm = 0.0;       // ||Q||_F after this column
  double offsup_inf = 0.0;   // max over i not in Omega_j of |<A_i, lambda_j>|
  bool zeta_zero = false;
  double energy = 0.0;       // ||Phi[lambda_j x_j^T]||_F^2
};

struct PassResult {
  Matrix lambdas;                  // m x t_star
  std::vector<double> q_trajectory;  // ||Q_t||_F for t = 0..|cols|
  std::vector<StepRecord> steps;     // one per processed column
  int t_star = 0;
  double scale = 1.0;
};

struct CertificateState {
  Matrix lambda;    // m x p
  Matrix residual;  // Phi[Lambda X^T]
  std::vector<StepRecord> per_step;  // q_norm is the cumulative residual norm
  std::vector<int> restart_boundaries;  // first column of every pass
  std::vector<std::string> warnings;
  int passes = 0;
};

// A_Omega (A_Omega^T A_Omega)^{-1} sigma.
Vector least_squares_cert(const Dictionary& a, std::span<const int> omega, const Vector& signs);

// zeta_scale * Theta Q_prev x / ||Theta Q_prev x||, or zero on the degenerate
// branch, where Theta projects off range(A_Omega).
Vector deflation_direction(const Dictionary& a, std::span<const int> omega, const Matrix& q_prev,
                           const Vector& x, const CertificateOptions& opts = {});

// One sweep of the sequential construction over columns [first, last),
// starting from Q = 0 with coefficients multiplied by `scale`.
PassResult golfing_pass(const Dictionary& a, const SparseCoeffs& x, int first, int last,
                        double scale, const CertificateOptions& opts = {});

// Window of admissible stopping indices for a pass over `count` columns.
int golfing_window_start(int count);

CertificateState build_certificate(const Dictionary& a, const SparseCoeffs& x,
                                   const CertificateOptions& opts = {});

struct CertificateReport {
  double interp_dev = 0.0;   // max over Omega of |A^T Lambda - Sigma|
  double offsup_inf = 0.0;   // max over the complement of |A^T Lambda|
  double phi_norm = 0.0;     // ||Phi[Lambda X^T]||_F
  double alpha = 0.0;
  bool interp_ok = false;
  bool offsup_ok = false;
  bool phi_ok = false;
  bool all() const { return interp_ok && offsup_ok && phi_ok; }
};

inline constexpr double kInterpolationTol = 1e-9;

CertificateReport verify_certificate(const Dictionary& a, const SparseCoeffs& x,
                                     const Matrix& lambda, double alpha);

}  // namespace dictcert
