#include "powerlab/api.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "powerlab/power.hpp"

namespace powerlab::api {

namespace {

Endpoint make(std::string name, TestId test, std::string summary, Json example) {
  return Endpoint{std::move(name), test, std::move(summary), std::move(example)};
}

std::vector<Endpoint> build_endpoints() {
  std::vector<Endpoint> e;
  e.push_back(make("one_sample_t_test", TestId::one_sample_t, "One-sample t-test against a constant",
                   {{"delta", 0.5}, {"sd", 1.0}, {"power", 0.8}}));
  e.push_back(make("two_sample_t_test", TestId::two_sample_t, "Two independent samples t-test",
                   {{"delta", 1.5}, {"sd", 0.5}, {"power", 0.8}}));
  e.push_back(make("paired_t_test", TestId::paired_t, "Paired t-test on within-pair differences",
                   {{"delta", 0.4}, {"sd", 1.0}, {"power", 0.9}}));
  e.push_back(make("one_way_anova", TestId::one_way_anova, "One-way ANOVA with equal group sizes",
                   {{"f", 0.25}, {"k", 3}, {"power", 0.8}}));
  e.push_back(make("one_proportion_z_test", TestId::one_proportion_z, "One-sample proportion z-test",
                   {{"p0", 0.5}, {"p1", 0.65}, {"power", 0.8}}));
  e.push_back(make("two_proportions_z_test", TestId::two_proportions_z, "Two independent proportions z-test",
                   {{"p0", 0.18}, {"p1", 0.14}, {"power", 0.8}}));
  e.push_back(make("chi_square_test", TestId::chi_square, "Chi-square test with Cohen's w",
                   {{"w", 0.3}, {"df", 2}, {"power", 0.8}}));
  e.push_back(make("correlation_test", TestId::correlation, "Test of a Pearson correlation against zero",
                   {{"r", 0.3}, {"power", 0.8}}));
  e.push_back(make("mann_whitney", TestId::mann_whitney, "Mann-Whitney rank-sum test",
                   {{"delta", 0.5}, {"sd", 1.0}, {"power", 0.8}}));
  e.push_back(make("paired_wilcoxon", TestId::paired_wilcoxon, "Wilcoxon signed-rank test on paired differences",
                   {{"delta", 0.5}, {"sd", 1.0}, {"power", 0.8}}));
  e.push_back(make("kruskal_wallis", TestId::kruskal_wallis, "Kruskal-Wallis rank test",
                   {{"f", 0.25}, {"k", 3}, {"power", 0.8}}));
  e.push_back(make("log_rank_test", TestId::log_rank, "Log-rank test (Freedman)",
                   {{"hr", 2}, {"pE", 0.5}, {"pC", 0.7}, {"power", 0.9}}));
  e.push_back(make("cox_ph", TestId::cox_ph, "Cox proportional hazards regression on one covariate",
                   {{"hr", 1.5}, {"sigma", 1}, {"power", 0.8}}));
  return e;
}

Json value_json(std::string_view name, const inputs::ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) {
    const auto* def = inputs::find_field(name);
    if (def && def->type == inputs::FieldType::integer && std::fabs(*d) < 9e15) return static_cast<long long>(*d);
    return *d;
  }
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return std::get<std::vector<double>>(v);
}

std::vector<FieldError> merge(std::vector<FieldError> first, const std::vector<FieldError>& more) {
  for (const auto& e : more) {
    const bool dup = std::any_of(first.begin(), first.end(), [&](const FieldError& x) { return x.field == e.field; });
    if (!dup) first.push_back(e);
  }
  return first;
}

}  // namespace

const std::vector<Endpoint>& endpoints() {
  static const std::vector<Endpoint> e = build_endpoints();
  return e;
}

const Endpoint* find_endpoint(std::string_view name) {
  for (const auto& e : endpoints()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const Endpoint& endpoint_for(TestId test) {
  for (const auto& e : endpoints()) {
    if (e.test == test) return e;
  }
  throw std::logic_error("test without endpoint");
}

inputs::ParamMap params_from_json(const Json& object, std::vector<FieldError>& errors) {
  inputs::ParamMap out;
  for (const auto& [name, v] : object.items()) {
    if (v.is_number()) {
      out[name] = v.get<double>();
    } else if (v.is_string()) {
      out[name] = v.get<std::string>();
    } else if (v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); })) {
      out[name] = v.get<std::vector<double>>();
    } else if (!inputs::find_field(name)) {
      errors.push_back({name, fmt::format("unknown field; did you mean '{}'?", inputs::nearest_field(name))});
    } else {
      errors.push_back({name, fmt::format("unsupported JSON type {}", v.type_name())});
    }
  }
  return out;
}

Json params_to_json(const inputs::ParamMap& params) {
  Json j = Json::object();
  for (const auto& [k, v] : params) j[k] = value_json(k, v);
  return j;
}

Json field_errors(const std::vector<FieldError>& errors) {
  Json list = Json::array();
  for (const auto& e : errors) list.push_back({{"field", e.field}, {"message", e.message}});
  return Json{{"error", "invalid_request"}, {"errors", list}};
}

Json error_body(std::string_view code, std::string_view message) {
  return Json{{"error", std::string(code)}, {"message", std::string(message)}};
}

Json solve_response(const inputs::Prepared& prepared, const SolveResult& r) {
  const TestSpec& spec = prepared.request.spec;
  Json j = Json::object();
  j["test"] = std::string(to_string(r.test));
  j["target"] = std::string(to_string(r.target));
  if (r.target == Target::sample_size) j["sample_size"] = r.allocation.first();
  j["n_per_arm"] = r.allocation.arms;
  j["arms"] = power::arm_labels(spec);
  j["n_total"] = r.allocation.total();
  j["achieved_power"] = r.achieved_power;
  if (r.events_required) j["events_required"] = *r.events_required;
  if (r.effect_solved) j["effect"] = {{"field", r.effect_field}, {"value", *r.effect_solved}};
  j["formula_id"] = r.formula_id;
  j["inputs"] = params_to_json(prepared.inputs);
  j["defaults_applied"] = prepared.defaults_applied;
  return j;
}

Outcome compute(TestId test, const inputs::ParamMap& params) {
  try {
    const auto prepared = inputs::prepare(test, params);
    const auto result = power::solve(prepared.request);
    return {200, solve_response(prepared, result)};
  } catch (const InvalidSpec& e) {
    return {400, field_errors(e.errors())};
  } catch (const Unreachable& e) {
    return {422, error_body("unreachable", e.what())};
  }
}

Outcome compute(TestId test, std::string_view body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return {400, error_body("invalid_json", e.what())};
  }
  if (!j.is_object()) return {400, error_body("invalid_json", "request body must be a JSON object")};
  std::vector<FieldError> conversion;
  const auto params = params_from_json(j, conversion);
  Outcome out = compute(test, params);
  if (conversion.empty()) return out;
  std::vector<FieldError> rest;
  if (out.status == 400 && out.body.contains("errors")) {
    for (const auto& e : out.body["errors"]) rest.push_back({e["field"], e["message"]});
  }
  return {400, field_errors(merge(conversion, rest))};
}

Json to_json(const SolveResult& r) {
  Json j = Json::object();
  j["test"] = std::string(to_string(r.test));
  j["target"] = std::string(to_string(r.target));
  j["n_per_arm"] = r.allocation.arms;
  j["n_total"] = r.allocation.total();
  j["achieved_power"] = r.achieved_power;
  if (r.events_required) j["events_required"] = *r.events_required;
  if (r.effect_solved) j["effect"] = {{"field", r.effect_field}, {"value", *r.effect_solved}};
  j["formula_id"] = r.formula_id;
  return j;
}

Json to_json(const selector::Recommendation& r) {
  Json params = Json::array();
  for (const auto& item : r.required_params) {
    Json p{{"name", item.name}, {"description", item.description}};
    if (item.default_text) p["default"] = *item.default_text;
    p["alternatives"] = item.alternatives;
    params.push_back(std::move(p));
  }
  Json alts = Json::array();
  for (const auto& a : r.alternatives) alts.push_back({{"test", std::string(to_string(a.test))}, {"reason", a.reason}});
  return Json{{"test", std::string(to_string(r.test))},
              {"rationale", r.rationale},
              {"required_params", params},
              {"alternatives", alts}};
}

Json to_json(const session::Reply& r) {
  Json j = Json::object();
  j["ok"] = r.ok;
  j["explanation"] = r.explanation;
  if (r.prompt) j["prompt"] = *r.prompt;
  j["pending"] = r.pending;
  Json errs = Json::array();
  for (const auto& e : r.errors) errs.push_back({{"field", e.field}, {"message", e.message}});
  j["errors"] = errs;
  j["assumed"] = r.assumed;
  if (r.recommendation) j["recommendation"] = to_json(*r.recommendation);
  if (r.result) j["result"] = to_json(*r.result);
  if (!r.transcript.empty()) j["transcript"] = r.transcript;
  return j;
}

Json to_json(const session::SessionState& s) {
  Json j = Json::object();
  j["id"] = s.id;
  j["descriptor"] = s.descriptor;
  j["test"] = s.chosen_test ? Json(std::string(to_string(*s.chosen_test))) : Json(nullptr);
  j["target"] = std::string(to_string(s.target));
  j["known"] = params_to_json(s.known);
  j["pending"] = s.pending;
  Json history = Json::array();
  for (const auto& h : s.history) {
    history.push_back({{"at_ms", h.at_ms},
                       {"command", session::to_text(h.command)},
                       {"ok", h.reply.ok},
                       {"explanation", h.reply.explanation}});
  }
  j["history"] = history;
  j["created_ms"] = s.created_ms;
  j["updated_ms"] = s.updated_ms;
  return j;
}

std::string dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

}  // namespace powerlab::api
