#pragma once

// JSON wire format of the computation endpoints, shared by the HTTP
// service and the command line so both give identical answers.

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "powerlab/design.hpp"
#include "powerlab/inputs.hpp"
#include "powerlab/session.hpp"

namespace powerlab::api {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kVersion = "1.0.0";
inline constexpr std::string_view kPrefix = "/api/v1/";

struct Endpoint {
  std::string name;  // path segment after /api/v1/
  TestId test;
  std::string summary;
  Json example;  // sample request body
};

/// One endpoint per supported test, in TestId order.
const std::vector<Endpoint>& endpoints();
const Endpoint* find_endpoint(std::string_view name);
const Endpoint& endpoint_for(TestId test);

/// Status code plus body. Bodies are serialized with dump().
struct Outcome {
  int status = 200;
  Json body;
};

/// Converts a JSON request object into named parameters. Values of an
/// unsupported JSON type are reported as field errors.
inputs::ParamMap params_from_json(const Json& object, std::vector<FieldError>& errors);
Json params_to_json(const inputs::ParamMap& params);

/// Validates, solves and renders. 400 for malformed JSON or field errors,
/// 422 when the goal is unreachable.
Outcome compute(TestId test, std::string_view body);
Outcome compute(TestId test, const inputs::ParamMap& params);

/// Response body of a successful solve.
Json solve_response(const inputs::Prepared& prepared, const SolveResult& result);

Json field_errors(const std::vector<FieldError>& errors);
Json error_body(std::string_view code, std::string_view message);

Json to_json(const SolveResult& r);
Json to_json(const selector::Recommendation& r);
Json to_json(const session::Reply& r);
Json to_json(const session::SessionState& s);

/// Compact serialization used for every response and for stored results.
std::string dump(const Json& j);

}  // namespace powerlab::api
