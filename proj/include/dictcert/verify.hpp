#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dictcert/linalg.hpp"
#include "dictcert/model.hpp"

namespace dictcert {

// Outcome of one Monte Carlo check. `estimate` is compared to `bound` in the
// direction of the claim; `violations` counts hard failures of claims that
// hold deterministically on the conditioning event.
struct McReport {
  std::string name;
  int trials = 0;
  double estimate = 0.0;
  double bound = 0.0;
  double ci_halfwidth = 0.0;
  int violations = 0;
  bool passed = false;
  uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& key) const;
};

// 95% half-width for a frequency: normal approximation, Wilson interval when
// fewer than five successes or failures.
double frequency_halfwidth(int successes, int trials);
// 95% half-width for a sample mean.
double mean_halfwidth(const std::vector<double>& samples);

McReport mc_eig_event(int n, int p, int k, double t, int trials, uint64_t seed,
                      double min_frequency = 0.99, int jobs = 1);

McReport mc_support_regularity(int n, int p, int k, int trials, uint64_t seed, int jobs = 1);

McReport mc_row_events(int n, int p, int k, int trials, uint64_t seed, int jobs = 1);

McReport mc_psi_bound(const Dictionary& a, int p, int k, int trials, uint64_t seed, int jobs = 1);

McReport mc_decoupling(const Matrix& m, int k, int trials, uint64_t seed, int jobs = 1);

McReport mc_khintchine(const Matrix& m, double sigma, int trials, uint64_t seed, int jobs = 1);

McReport mc_chernoff_demo(int dim, int summands, double b, int trials, uint64_t seed,
                          int jobs = 1);

struct QScalingPoint {
  int p = 0;
  double mean_q = 0.0;
  double tau_ratio = 0.0;  // tau_hat * p / (k n)
};

McReport mc_q_scaling(int m, int n, int k, const std::vector<int>& p_grid, int trials,
                      uint64_t seed, DictionaryKind kind = DictionaryKind::orthonormal,
                      int jobs = 1, std::vector<QScalingPoint>* points = nullptr);

McReport mc_truncation_check(int n, int p, int k, double beta, int trials, uint64_t seed,
                             int jobs = 1);

// Named checks at their reference parameter points. Check c runs with
// derive_seed(seed, c) so results do not depend on which others run.
const std::vector<std::string>& lemma_names();
McReport run_lemma(const std::string& which, int trials, uint64_t seed, int jobs = 1);

}  // namespace dictcert
