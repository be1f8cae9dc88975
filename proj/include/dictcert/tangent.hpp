#pragma once

#include <optional>
#include <span>
#include <string>

#include "dictcert/balancedness.hpp"
#include "dictcert/certificate.hpp"
#include "dictcert/linalg.hpp"
#include "dictcert/model.hpp"

namespace dictcert {

struct TangentPerturbation {
  Matrix delta_a;  // m x n
  Matrix delta_x;  // n x p
};

struct TangentResidual {
  double bilinear_norm = 0.0;  // ||dA X + A dX||_F
  double diag_inf = 0.0;       // max_i |<A_i, dA_i>|
};

TangentResidual tangent_residual(const Dictionary& a, const Matrix& x,
                                 const TangentPerturbation& pert);

// True when the residual is below tol relative to the perturbation size.
bool tangent_feasible(const Dictionary& a, const Matrix& x, const TangentPerturbation& pert,
                      double tol);

struct RipWitness {
  TangentPerturbation pert;
  TangentResidual residual;
  bool same_column_sparsity = false;
};

// dA = -A Pi, dX = Pi X with Pi e_i = e_{perm[i]}.
RipWitness rip_failure_witness(const Dictionary& a, const Matrix& x, std::span<const int> perm);

// Explicit parametrization of the tangent space when A has full row rank:
//   dA_i = U_i a_i with U_i an orthonormal basis of A_i's complement,
//   dX   = -A^+ dA X + N W with N an orthonormal basis of null(A).
// Parameters are (a_1, ..., a_n, vec W), n(m-1) + (n-m)p in total.
class TangentBasis {
 public:
  TangentBasis(const Dictionary& a, const Matrix& x);

  Index num_params() const { return num_params_; }
  // vec(dX) = coeff_map() * theta.
  const Matrix& coeff_map() const { return coeff_map_; }
  TangentPerturbation perturbation(const Vector& theta) const;

 private:
  Index m_, n_, p_;
  Index num_params_;
  std::vector<Matrix> complements_;
  Matrix pinv_;
  Matrix null_;
  Matrix coeff_map_;
};

enum class Backend { lp, pd };
enum class SolveStatus { optimal, max_iter, infeasible_numerics };

const char* to_string(Backend b);
const char* to_string(SolveStatus s);
Backend parse_backend(const std::string& s);

struct SolverParams {
  Backend backend = Backend::lp;
  double gap_tol = 1e-9;          // stop when gap <= gap_tol * ||X||_1
  int max_iter = 500000;          // first-order iterations
  Index max_variables = 50000;    // np + mn
};

struct LinearizedSolution {
  TangentPerturbation pert;
  double objective = 0.0;  // ||X + dX||_1
  double x_l1 = 0.0;       // ||X||_1
  double gap = 0.0;        // primal minus certified dual bound
  SolveStatus status = SolveStatus::optimal;
  Vector dual;             // u with u orthogonal to the tangent image, |u| <= 1
  Index rank = 0;
  Index num_params = 0;
  int iterations = 0;
};

LinearizedSolution solve_linearized(const Dictionary& a, const Matrix& x,
                                    const SolverParams& params = {});

struct KktReport {
  double interp_dev = 0.0;
  double offsup_inf = 0.0;
  double residual = 0.0;   // ||Lambda X^T - A diag(gamma)||_F
  bool interp_ok = false;
  bool offsup_ok = false;
  bool residual_ok = false;
  bool all() const { return interp_ok && offsup_ok && residual_ok; }
};

// gamma_i = <A_i, (Lambda X^T)_i>.
Vector kkt_gamma(const Dictionary& a, const Matrix& lambda, const Matrix& x);

KktReport kkt_check(const Dictionary& a, const SparseCoeffs& x, const Matrix& lambda,
                    const Vector& gamma, double tol = 1e-9);

enum class Verdict { certified_yes, certified_no, undecided };
enum class Route { certificate, direct_solve, balancedness_failure };

const char* to_string(Verdict v);
const char* to_string(Route r);

struct OptimalityConfig {
  bool use_certificate = true;
  bool use_direct = true;
  SolverParams solver;
  CertificateOptions certificate;
  BalancednessOptions balancedness;
  double dual_margin = 1e-3;      // strict dual feasibility slack
  double objective_tol = 1e-9;    // "objective equals ||X||_1"
  double descent_tol = 1e-8;      // required improvement for certified_no
  int uniqueness_samples = 0;     // random directions for the sharpness margin
  uint64_t seed = 0;
};

struct OptimalityVerdict {
  Verdict verdict = Verdict::undecided;
  Route route = Route::direct_solve;
  std::optional<AlphaEstimate> alpha;
  std::optional<CertificateReport> certificate;
  std::string balancedness_note;
  bool direct_ran = false;
  double objective = 0.0;
  double x_l1 = 0.0;
  double gap = 0.0;
  bool strict_dual = false;
  bool injective = false;
  std::optional<TangentPerturbation> improving;
  std::optional<double> sharpness;  // min over sampled directions
};

OptimalityVerdict is_local_min(const Dictionary& a, const SparseCoeffs& x,
                               const OptimalityConfig& config = {});

}  // namespace dictcert
