#pragma once

#include <json.hpp>

#include "dictcert/balancedness.hpp"
#include "dictcert/certificate.hpp"
#include "dictcert/learner.hpp"
#include "dictcert/tangent.hpp"
#include "dictcert/verify.hpp"

namespace dictcert {

using Json = nlohmann::ordered_json;

Json to_json(const McReport& r);
Json to_json(const CertificateReport& r);
Json to_json(const CertificateState& s);
Json to_json(const AlphaEstimate& a);
Json to_json(const BalancednessReport& r);
Json to_json(const OptimalityVerdict& v);
Json to_json(const PhaseCell& c);
Json to_json(const KktReport& r);

// JSON has no infinities or NaN; those become null.
Json number(double x);

}  // namespace dictcert
