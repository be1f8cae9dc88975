#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dictcert/learner.hpp"

namespace dictcert {

// Where an instance comes from: a saved directory, or generated from
// (n, m, k, p, kind) and the master seed. `incoherence` > 0 resamples until
// k mu(A) < incoherence.
struct InstanceSource {
  std::string instance;
  int n = 16;
  int m = 16;
  int k = 2;
  int p = 800;
  std::string kind = "gaussian_unit";
  double incoherence = 0.0;
};

struct CertifyConfig {
  InstanceSource source;
  double alpha = 0.0;  // 0: estimate from the balancedness module
};

struct BalanceConfig {
  InstanceSource source;
  bool dense_check = false;
};

struct SolveConfig {
  InstanceSource source;
  std::string backend = "lp";
  double tol = 1e-9;
  int samples = 0;     // random directions for the sharpness margin
  bool use_certificate = true;
};

struct LemmasConfig {
  std::string which = "all";
  int trials = 1000;
};

struct GenConfig {
  InstanceSource source;
};

struct RunConfig {
  std::string command;
  uint64_t seed = 0;
  std::string out;
  GenConfig gen;
  CertifyConfig certify;
  BalanceConfig balance;
  SolveConfig solve;
  PhaseConfig phase;
  LemmasConfig lemmas;
};

// Unknown keys are rejected with a ValidationError.
nlohmann::ordered_json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const PhaseConfig& c);
PhaseConfig phase_config_from_json(const nlohmann::ordered_json& j);

// Exit codes: 0 success, 1 validation error, 2 numerical failure,
// 3 failed acceptance check under --assert.
int run(int argc, const char* const* argv);

}  // namespace dictcert
