#pragma once

#include <vector>

#include "dictcert/linalg.hpp"

namespace dictcert {

// minimize c^T x  subject to  A x = b,  lower <= x <= upper.
// Lower bounds must be finite; upper bounds may be +infinity.
struct LpProblem {
  Matrix a;
  Vector b;
  Vector c;
  Vector lower;
  Vector upper;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

const char* to_string(LpStatus s);

struct LpOptions {
  int max_iter = 2000000;
  double feas_tol = 1e-9;
  double opt_tol = 1e-10;
  int refactor_every = 64;
  // Stop after phase one (feasibility only).
  bool feasibility_only = false;
  // Optional starting bound per variable: true = start at the upper bound.
  std::vector<bool> start_at_upper;
};

struct LpResult {
  LpStatus status = LpStatus::iteration_limit;
  Vector x;
  Vector duals;    // y with c - A^T y = reduced costs
  Vector reduced;  // c - A^T y
  double objective = 0.0;
  double infeasibility = 0.0;  // phase-one optimum
  int iterations = 0;
};

// Bounded-variable revised simplex with an explicit basis inverse,
// artificial phase one, Dantzig partial pricing and a Bland fallback after
// a run of degenerate pivots. Deterministic.
LpResult solve_lp(const LpProblem& problem, const LpOptions& opts = {});

}  // namespace dictcert
