#include "dictcert/report_json.hpp"

#include <cmath>

namespace dictcert {

Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json to_json(const McReport& r) {
  Json j;
  j["name"] = r.name;
  j["trials"] = r.trials;
  j["estimate"] = number(r.estimate);
  j["bound"] = number(r.bound);
  j["ci_halfwidth"] = number(r.ci_halfwidth);
  j["violations"] = r.violations;
  j["passed"] = r.passed;
  j["seed"] = r.seed;
  Json m = Json::object();
  for (const auto& [k, v] : r.metrics) m[k] = number(v);
  j["metrics"] = m;
  return j;
}

Json to_json(const CertificateReport& r) {
  Json j;
  j["interp_dev"] = number(r.interp_dev);
  j["offsup_inf"] = number(r.offsup_inf);
  j["phi_norm"] = number(r.phi_norm);
  j["alpha"] = number(r.alpha);
  j["interp_ok"] = r.interp_ok;
  j["offsup_ok"] = r.offsup_ok;
  j["phi_ok"] = r.phi_ok;
  j["all"] = r.all();
  return j;
}

Json to_json(const CertificateState& s) {
  Json j;
  j["passes"] = s.passes;
  j["restart_boundaries"] = s.restart_boundaries;
  j["residual_norm"] = number(s.residual.norm());
  j["warnings"] = s.warnings;
  return j;
}

Json to_json(const AlphaEstimate& a) {
  Json j;
  j["xi"] = number(a.xi);
  j["offdiag_norm"] = number(a.offdiag_norm);
  j["xx_lambda_min"] = number(a.xx_lambda_min);
  j["op_norm"] = number(a.op_norm);
  j["alpha"] = number(a.alpha);
  j["degenerate"] = a.degenerate;
  j["dense"] = a.dense;
  return j;
}

Json to_json(const BalancednessReport& r) {
  Json j;
  j["xi"] = number(r.xi);
  j["alpha"] = number(r.alpha);
  j["offdiag_norm"] = number(r.offdiag_norm);
  j["xx_lambda_min"] = number(r.xx_lambda_min);
  j["term_identity"] = number(r.term_identity);
  j["term_R"] = number(r.term_R);
  j["term_Tdiff"] = number(r.term_Tdiff);
  j["eig_gap"] = number(r.eig_gap);
  j["xi_gap"] = number(r.xi_gap);
  j["block_norm_sq"] = number(r.block_norm_sq);
  Json psi = Json::array();
  for (std::size_t i = 0; i < r.psi_norms.size(); ++i) {
    psi.push_back({{"row", i}, {"norm", number(r.psi_norms[i])}, {"event", bool(r.psi_events[i])}});
  }
  j["psi"] = psi;
  j["psi_bound"] = number(r.psi_bound);
  j["degenerate"] = r.degenerate;
  j["dense"] = r.dense;
  j["chain_holds"] = r.chain_holds;
  j["psi_sum_holds"] = r.psi_sum_holds;
  j["psi_bound_holds"] = r.psi_bound_holds;
  return j;
}

Json to_json(const OptimalityVerdict& v) {
  Json j;
  j["verdict"] = to_string(v.verdict);
  j["route"] = to_string(v.route);
  j["alpha"] = v.alpha ? number(v.alpha->alpha) : Json(nullptr);
  j["xi"] = v.alpha ? number(v.alpha->xi) : Json(nullptr);
  j["objective"] = v.direct_ran ? number(v.objective) : Json(nullptr);
  j["x_l1"] = number(v.x_l1);
  Json margins;
  margins["gap"] = v.direct_ran ? number(v.gap) : Json(nullptr);
  margins["strict_dual"] = v.strict_dual;
  margins["injective"] = v.injective;
  margins["sharpness"] = v.sharpness ? number(*v.sharpness) : Json(nullptr);
  if (v.certificate) {
    margins["interp_dev"] = number(v.certificate->interp_dev);
    margins["offsup_inf"] = number(v.certificate->offsup_inf);
    margins["phi_norm"] = number(v.certificate->phi_norm);
  }
  j["margins"] = margins;
  j["certificate"] = v.certificate ? to_json(*v.certificate) : Json(nullptr);
  j["balancedness_note"] = v.balancedness_note;
  j["improving_found"] = v.improving.has_value();
  return j;
}

Json to_json(const PhaseCell& c) {
  Json j;
  j["n"] = c.n;
  j["m"] = c.m;
  j["k"] = c.k;
  j["p"] = c.p;
  j["trials"] = c.trials;
  j["success_frac"] = number(c.success_frac);
  j["mean_aligned_err"] = number(c.mean_aligned_err);
  j["mean_raw_err"] = number(c.mean_raw_err);
  j["failed_trials"] = c.failed_trials;
  j["first_error"] = c.first_error;
  return j;
}

Json to_json(const KktReport& r) {
  Json j;
  j["interp_dev"] = number(r.interp_dev);
  j["offsup_inf"] = number(r.offsup_inf);
  j["residual"] = number(r.residual);
  j["all"] = r.all();
  return j;
}

}  // namespace dictcert
