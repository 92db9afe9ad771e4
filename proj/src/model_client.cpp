#include "powerlab/model_client.hpp"

#include <stdexcept>

#include <fmt/format.h>
#include <httplib.h>

namespace powerlab::session {

namespace {

using nlohmann::ordered_json;

std::string scalar_text(const ordered_json& v) {
  if (v.is_number()) return fmt::format("{}", v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_array()) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + scalar_text(v[i]);
    return out + "]";
  }
  throw std::invalid_argument("unsupported argument value");
}

ordered_json value_json(const inputs::ParamValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return std::get<std::vector<double>>(v);
}

Interpretation fallback(std::string_view text, std::string diagnostic) {
  Interpretation out;
  out.command = parse_command(text);
  out.fell_back = true;
  out.diagnostics.push_back(std::move(diagnostic));
  return out;
}

}  // namespace

Command command_from_json(const ordered_json& j) {
  if (!j.is_object() || !j.contains("verb") || !j["verb"].is_string()) {
    throw std::invalid_argument("expected an object with a string 'verb'");
  }
  const ordered_json args = j.value("args", ordered_json::object());
  if (!args.is_object()) throw std::invalid_argument("'args' must be an object");
  const std::string verb = j["verb"].get<std::string>();
  std::string text = verb;
  if (verb == "describe") {
    for (const auto& [k, v] : args.items()) text += fmt::format(" {}={}", k, scalar_text(v));
  } else if (verb == "set" || verb == "whatif") {
    bool first = true;
    for (const auto& [k, v] : args.items()) {
      text += fmt::format("{} {} {}", first ? "" : ",", k, scalar_text(v));
      first = false;
    }
  } else if (verb == "choose") {
    text += " " + scalar_text(args.at("test"));
  } else if (verb == "unset") {
    for (const auto& n : args.at("names")) text += " " + scalar_text(n);
  } else if (verb == "solve") {
    if (args.contains("target")) text += " " + scalar_text(args["target"]);
  } else if (verb == "explain") {
    if (args.contains("topic")) text += " " + scalar_text(args["topic"]);
  } else if (verb != "export") {
    throw std::invalid_argument(fmt::format("unknown verb '{}'", verb));
  }
  try {
    return parse_command(text);
  } catch (const ParseError& e) {
    throw std::invalid_argument(fmt::format("model command does not parse: {}", e.what()));
  }
}

ordered_json command_to_json(const Command& cmd) {
  ordered_json args = ordered_json::object();
  switch (cmd.verb) {
    case Verb::describe:
      for (const auto& [k, v] : cmd.descriptor) args[k] = v;
      break;
    case Verb::choose: args["test"] = std::string(to_string(*cmd.test)); break;
    case Verb::set:
    case Verb::whatif:
      for (const auto& [k, v] : cmd.assignments) args[k] = value_json(v);
      break;
    case Verb::unset: args["names"] = cmd.names; break;
    case Verb::solve:
      if (cmd.target) args["target"] = std::string(to_string(*cmd.target));
      break;
    case Verb::explain:
      if (!cmd.topic.empty()) args["topic"] = cmd.topic;
      break;
    case Verb::export_transcript: break;
  }
  return ordered_json{{"verb", std::string(to_string(cmd.verb))}, {"args", args}};
}

Interpretation interpret_response(std::string_view text, std::string_view response) {
  ordered_json j;
  try {
    j = ordered_json::parse(response);
  } catch (const std::exception& e) {
    return fallback(text, fmt::format("model output is not JSON ({}); used the command grammar", e.what()));
  }
  try {
    return Interpretation{command_from_json(j), false, {}};
  } catch (const std::exception& e) {
    return fallback(text, fmt::format("model output rejected ({}); used the command grammar", e.what()));
  }
}

Interpretation StubClient::interpret(std::string_view text) { return Interpretation{parse_command(text), false, {}}; }

FixtureClient::FixtureClient(std::map<std::string, std::string, std::less<>> responses)
    : responses_(std::move(responses)) {}

Interpretation FixtureClient::interpret(std::string_view text) {
  auto it = responses_.find(text);
  if (it == responses_.end()) return fallback(text, "no recorded model response; used the command grammar");
  return interpret_response(text, it->second);
}

HttpClient::HttpClient(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

Interpretation HttpClient::interpret(std::string_view text) {
  // Split "scheme://host[:port]/path".
  const auto scheme_end = endpoint_.find("://");
  const auto path_start = endpoint_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  httplib::Client client(base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const std::string body = ordered_json{{"text", std::string(text)}}.dump();
  auto res = client.Post(path, body, "application/json");
  if (!res) {
    return fallback(text, fmt::format("model endpoint unavailable ({}); used the command grammar",
                                      httplib::to_string(res.error())));
  }
  if (res->status != 200) {
    return fallback(text, fmt::format("model endpoint returned HTTP {}; used the command grammar", res->status));
  }
  return interpret_response(text, res->body);
}

std::unique_ptr<ModelClient> make_client(const std::string& endpoint) {
  if (endpoint.empty()) return std::make_unique<StubClient>();
  return std::make_unique<HttpClient>(endpoint, std::chrono::milliseconds(5000));
}

}  // namespace powerlab::session
