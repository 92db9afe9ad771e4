#include "powerlab/openapi.hpp"

#include <algorithm>

namespace powerlab::api {

namespace {

Json schema_ref(std::string_view name) { return Json{{"$ref", "#/components/schemas/" + std::string(name)}}; }

Json json_content(Json schema) { return Json{{"application/json", {{"schema", std::move(schema)}}}}; }

Json response(std::string_view description, std::string_view schema) {
  return Json{{"description", std::string(description)}, {"content", json_content(schema_ref(schema))}};
}

Json string_array() { return Json{{"type", "array"}, {"items", {{"type", "string"}}}}; }

Json integer_array() { return Json{{"type", "array"}, {"items", {{"type", "integer"}}}}; }

Json strict_object(Json properties, std::vector<std::string> required) {
  return Json{{"type", "object"},
              {"additionalProperties", false},
              {"properties", std::move(properties)},
              {"required", std::move(required)}};
}

Json path_id(std::string_view description) {
  return Json{{"name", "id"}, {"in", "path"}, {"required", true}, {"description", std::string(description)},
              {"schema", {{"type", "string"}}}};
}

Json component_schemas() {
  Json s = Json::object();
  s["FieldError"] = strict_object({{"field", {{"type", "string"}}}, {"message", {{"type", "string"}}}}, {"field", "message"});
  s["ValidationError"] = strict_object(
      {{"error", {{"const", "invalid_request"}}}, {"errors", {{"type", "array"}, {"items", schema_ref("FieldError")}}}},
      {"error", "errors"});
  s["Problem"] = strict_object({{"error", {{"type", "string"}}},
                                {"message", {{"type", "string"}}},
                                {"expired_at_ms", {{"type", "integer"}}}},
                               {"error", "message"});
  s["Effect"] = strict_object({{"field", {{"type", "string"}}}, {"value", {{"type", "number"}}}}, {"field", "value"});
  s["SolveResponse"] = strict_object(
      {{"test", {{"type", "string"}}},
       {"target", {{"enum", {"sample_size", "power", "effect"}}}},
       {"sample_size",
        {{"type", "integer"},
         {"description", "Reference-arm size: per arm for multi-arm designs, total for single-sample designs"}}},
       {"n_per_arm", integer_array()},
       {"arms", string_array()},
       {"n_total", {{"type", "integer"}}},
       {"achieved_power", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
       {"events_required", {{"type", "integer"}}},
       {"effect", schema_ref("Effect")},
       {"formula_id", {{"type", "string"}}},
       {"inputs", {{"type", "object"}, {"description", "Every input used, defaults included"}}},
       {"defaults_applied", string_array()}},
      {"test", "target", "n_per_arm", "arms", "n_total", "achieved_power", "formula_id", "inputs", "defaults_applied"});
  s["SolveResult"] = strict_object({{"test", {{"type", "string"}}},
                                    {"target", {{"type", "string"}}},
                                    {"n_per_arm", integer_array()},
                                    {"n_total", {{"type", "integer"}}},
                                    {"achieved_power", {{"type", "number"}}},
                                    {"events_required", {{"type", "integer"}}},
                                    {"effect", schema_ref("Effect")},
                                    {"formula_id", {{"type", "string"}}}},
                                   {"test", "target", "n_per_arm", "n_total", "achieved_power", "formula_id"});
  s["Recommendation"] = Json{{"type", "object"},
                             {"properties",
                              {{"test", {{"type", "string"}}},
                               {"rationale", {{"type", "string"}}},
                               {"required_params", {{"type", "array"}, {"items", {{"type", "object"}}}}},
                               {"alternatives", {{"type", "array"}, {"items", {{"type", "object"}}}}}}},
                             {"required", {"test", "rationale", "required_params", "alternatives"}}};
  s["Reply"] = strict_object({{"ok", {{"type", "boolean"}}},
                              {"explanation", {{"type", "string"}}},
                              {"prompt", {{"type", "string"}}},
                              {"pending", string_array()},
                              {"errors", {{"type", "array"}, {"items", schema_ref("FieldError")}}},
                              {"assumed", string_array()},
                              {"recommendation", schema_ref("Recommendation")},
                              {"result", schema_ref("SolveResult")},
                              {"transcript", {{"type", "string"}}}},
                             {"ok", "explanation", "pending", "errors", "assumed"});
  s["Session"] = strict_object({{"id", {{"type", "string"}}},
                                {"descriptor", {{"type", "object"}, {"additionalProperties", {{"type", "string"}}}}},
                                {"test", {{"type", Json::array({"string", "null"})}}},
                                {"target", {{"type", "string"}}},
                                {"known", {{"type", "object"}}},
                                {"pending", string_array()},
                                {"history", {{"type", "array"}, {"items", {{"type", "object"}}}}},
                                {"created_ms", {{"type", "integer"}}},
                                {"updated_ms", {{"type", "integer"}}},
                                {"expires_ms", {{"type", "integer"}}}},
                               {"id", "test", "target", "known", "pending", "history", "created_ms", "updated_ms"});
  s["CommandRequest"] = strict_object(
      {{"text", {{"type", "string"}, {"description", "One command in the session grammar, e.g. \"set p0 18%\""}}}}, {"text"});
  s["CommandResponse"] = strict_object({{"reply", schema_ref("Reply")},
                                        {"session", schema_ref("Session")},
                                        {"result_id", {{"type", "string"}}},
                                        {"interpretation",
                                         {{"type", "object"},
                                          {"properties",
                                           {{"command", {{"type", "string"}}},
                                            {"fell_back", {{"type", "boolean"}}},
                                            {"diagnostics", string_array()}}}}}},
                                       {"reply", "session"});
  s["StoredResult"] = strict_object({{"id", {{"type", "string"}}},
                                     {"timestamp_ms", {{"type", "integer"}}},
                                     {"endpoint", {{"type", "string"}}},
                                     {"session_id", {{"type", Json::array({"string", "null"})}}},
                                     {"request", {{"type", "object"}}},
                                     {"response", schema_ref("SolveResponse")}},
                                    {"id", "timestamp_ms", "endpoint", "session_id", "request", "response"});
  s["Health"] = strict_object({{"status", {{"const", "ok"}}},
                               {"version", {{"type", "string"}}},
                               {"endpoints", {{"type", "integer"}}},
                               {"results", {{"type", "integer"}}},
                               {"sessions", {{"type", "integer"}}},
                               {"scenarios", {{"type", "integer"}}}},
                              {"status", "version", "endpoints"});
  for (const auto& e : endpoints()) s[e.name + "_request"] = request_schema(e.test);
  return s;
}

Json compute_operation(const Endpoint& e) {
  Json op;
  op["operationId"] = e.name;
  op["summary"] = e.summary;
  op["description"] =
      "Solves for the sample size by default. Set target to \"power\" with n, or to \"effect\" with n and power. "
      "Omitted alpha, tails and allocation inputs take their defaults, which are echoed in the response.";
  Json body_content = json_content(schema_ref(e.name + "_request"));
  body_content["application/json"]["example"] = e.example;
  op["requestBody"] = {{"required", true}, {"content", body_content}};
  Json ok = response("Solved design", "SolveResponse");
  ok["headers"] = {{"X-Result-Id", {{"description", "Id of the stored result"}, {"schema", {{"type", "string"}}}}}};
  op["responses"] = {{"200", ok},
                     {"400", response("Malformed JSON or field-level validation errors", "ValidationError")},
                     {"422", response("The requested power cannot be reached", "Problem")}};
  return op;
}

}  // namespace

Json field_schema(std::string_view name, const std::optional<std::string>& default_text) {
  const auto* def = inputs::find_field(name);
  if (!def) throw std::invalid_argument("unknown field");
  Json s = Json::object();
  switch (def->type) {
    case inputs::FieldType::choice: {
      s["type"] = "string";
      Json options = Json::array();
      for (auto c : def->choices) options.push_back(std::string(c));
      s["enum"] = options;
      break;
    }
    case inputs::FieldType::number_list:
      s["type"] = "array";
      s["items"] = {{"type", "number"}};
      s["minItems"] = 2;
      break;
    case inputs::FieldType::number:
    case inputs::FieldType::integer:
      s["type"] = def->type == inputs::FieldType::integer ? "integer" : "number";
      if (def->minimum) s[def->exclusive_minimum ? "exclusiveMinimum" : "minimum"] = *def->minimum;
      if (def->maximum) s[def->exclusive_maximum ? "exclusiveMaximum" : "maximum"] = *def->maximum;
      break;
  }
  s["description"] = std::string(def->description);
  if (default_text) {
    if (def->type == inputs::FieldType::choice) {
      s["default"] = *default_text;
    } else {
      s["default"] = std::stod(*default_text);
    }
  }
  return s;
}

Json request_schema(TestId test) {
  Json properties = Json::object();
  std::vector<std::string> required;
  const auto entries = inputs::schema(test);
  for (const auto& name : inputs::accepted_names(test)) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
    properties[name] = field_schema(name, it == entries.end() ? std::nullopt : it->default_text);
    if (it == entries.end()) continue;
    const bool always = it->required_for_sample_size && it->required_for_power && it->required_for_effect;
    if (always && !it->default_text && it->alternatives.empty() && name != "k") required.push_back(name);
  }
  Json s = strict_object(std::move(properties), std::move(required));
  s["description"] = "Inputs of " + std::string(to_string(test)) + "; unknown fields are rejected";
  return s;
}

Json openapi_document() {
  Json doc;
  doc["openapi"] = "3.1.0";
  doc["info"] = {{"title", "powerlab statistical power service"},
                 {"version", std::string(kVersion)},
                 {"description",
                  "Sample size, power and minimal detectable effect for common study designs, plus a "
                  "stateful elicitation session."}};
  Json paths = Json::object();
  for (const auto& e : endpoints()) paths[std::string(kPrefix) + e.name] = {{"post", compute_operation(e)}};

  paths["/api/v1/openapi.json"] = {
      {"get",
       {{"operationId", "openapi"},
        {"summary", "This document"},
        {"responses", {{"200", {{"description", "OpenAPI document"}, {"content", json_content({{"type", "object"}})}}}}}}}};
  paths["/api/v1/health"] = {
      {"get", {{"operationId", "health"}, {"summary", "Readiness and version"}, {"responses", {{"200", response("Ready", "Health")}}}}}};
  paths["/api/v1/sessions"] = {
      {"post",
       {{"operationId", "create_session"},
        {"summary", "Start an elicitation session"},
        {"responses", {{"201", response("Created", "Session")}}}}}};
  paths["/api/v1/sessions/{id}"] = {
      {"get",
       {{"operationId", "get_session"},
        {"summary", "Current session state"},
        {"parameters", Json::array({path_id("Session id")})},
        {"responses",
         {{"200", response("Session", "Session")},
          {"404", response("Unknown session", "Problem")},
          {"410", response("Expired session", "Problem")}}}}}};
  paths["/api/v1/sessions/{id}/command"] = {
      {"post",
       {{"operationId", "session_command"},
        {"summary", "Apply one command to a session"},
        {"parameters", Json::array({path_id("Session id")})},
        {"requestBody", {{"required", true}, {"content", json_content(schema_ref("CommandRequest"))}}},
        {"responses",
         {{"200", response("Command applied", "CommandResponse")},
          {"400", response("Command does not parse", "Problem")},
          {"404", response("Unknown session", "Problem")},
          {"410", response("Expired session", "Problem")}}}}}};
  paths["/api/v1/results/{id}"] = {
      {"get",
       {{"operationId", "get_result"},
        {"summary", "Stored request and response"},
        {"parameters", Json::array({path_id("Result id")})},
        {"responses", {{"200", response("Stored result", "StoredResult")}, {"404", response("Unknown result", "Problem")}}}}}};
  paths["/api/v1/results/{id}/response"] = {
      {"get",
       {{"operationId", "get_result_response"},
        {"summary", "Original response bytes of a stored result"},
        {"parameters", Json::array({path_id("Result id")})},
        {"responses",
         {{"200", response("Stored response", "SolveResponse")}, {"404", response("Unknown result", "Problem")}}}}}};
  doc["paths"] = paths;
  doc["components"] = {{"schemas", component_schemas()}};
  return doc;
}

}  // namespace powerlab::api
