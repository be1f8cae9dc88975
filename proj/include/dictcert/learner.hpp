#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dictcert/linalg.hpp"
#include "dictcert/model.hpp"
#include "dictcert/tangent.hpp"

namespace dictcert {

struct SolveParams {
  double init_radius = 0.05;  // relative column perturbation of the initial dictionary
  int max_outer = 200;
  double inner_tol = 1e-12;   // stop when the predicted decrease is below inner_tol * ||X||_1
  int stall_limit = 10;       // outer iterations without meaningful decrease
  int max_halvings = 20;      // line search t = 1, 1/2, ..., 2^-max_halvings
  int plateau_window = 3;     // stop when the last plateau_window iterations together
  double plateau_tol = 1e-3;  // gained less than plateau_tol * ||X||_1
  SolverParams solver;
};

enum class LearnStatus { converged, stationary, max_outer };
const char* to_string(LearnStatus s);

struct LearnResult {
  Matrix a_hat;
  Matrix x_hat;
  std::vector<double> trace;  // ||X||_1 after every accepted iteration, starting value first
  LearnStatus status = LearnStatus::converged;
  int outer_iterations = 0;
};

// Minimum l1 solution of A x_j = y_j for every column. Square A is inverted
// directly; otherwise each column is a basis pursuit LP. Throws
// InfeasibleError when Y is not in the range of A.
Matrix sparse_code(const Dictionary& a, const Matrix& y);

LearnResult local_solve(const Matrix& y, const Dictionary& a0, const SolveParams& params = {});

struct Alignment {
  std::vector<int> perm;   // column i of the aligned estimate is signs[i] * A_hat[:, perm[i]]
  std::vector<double> signs;
  double rel_error = 0.0;  // after alignment
  double raw_error = 0.0;  // ||A_hat - A||_F / ||A||_F
};

Alignment align_sign_permutation(const Matrix& a_hat, const Matrix& a_true);

// Maximum-weight perfect assignment on a square weight matrix: row i gets
// column result[i].
std::vector<int> max_weight_assignment(const Matrix& weight);

// Columns renormalized after A_i + eta * ||A_i|| g_i / ||g_i|| with Gaussian g_i.
Dictionary perturb_dictionary(const Dictionary& a, double eta, uint64_t seed);

struct PhaseConfig {
  std::vector<int> n_list{8, 16};
  std::vector<double> ratio_list{1.0};
  std::vector<int> k_list;  // empty: 1 .. ceil(n/2)
  int trials = 10;
  uint64_t seed = 0;
  int p_override = 0;       // 0: round(5 n log n)
  DictionaryKind kind = DictionaryKind::gaussian_unit;
  SolveParams solve;
};

struct PhaseCell {
  int n = 0;
  int m = 0;
  int k = 0;
  int p = 0;
  int trials = 0;
  double success_frac = 0.0;
  double mean_aligned_err = 0.0;
  double mean_raw_err = 0.0;
  int failed_trials = 0;     // trials that raised an error
  std::string first_error;
};

int default_p(int n);
std::vector<int> phase_k_list(const PhaseConfig& config, int n);

std::vector<PhaseCell> phase_transition_grid(const PhaseConfig& config, int jobs = 1);

// Nonincreasing least-squares fit by pool adjacent violators.
std::vector<double> antitonic_fit(const std::vector<double>& values,
                                  const std::vector<double>& weights);

struct IsotonicCheck {
  std::vector<double> fit;
  double max_deviation = 0.0;  // max |raw - fit|
  double tolerance = 0.0;      // two worst-case binomial standard errors
  bool holds = false;
};

// Success fractions ordered by k for one (n, m); trials per cell.
IsotonicCheck isotonic_check(const std::vector<double>& success, int trials);

// Grayscale heatmap: one row per (n, m), one column per k; white = 1.
std::string phase_svg(const std::vector<PhaseCell>& cells);

}  // namespace dictcert
