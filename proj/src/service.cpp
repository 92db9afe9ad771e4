#include "powerlab/service.hpp"

#include <cstdlib>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "powerlab/openapi.hpp"
#include "powerlab/power.hpp"

namespace powerlab::service {

namespace {

using api::Json;

Response json_response(int status, const Json& body) { return Response{status, api::dump(body), {}}; }

Response problem(int status, std::string_view code, std::string_view message) {
  return json_response(status, api::error_body(code, message));
}

long long env_integer(const char* name, long long fallback, long long lo, long long hi) {
  const char* raw = std::getenv(name);
  if (!raw || !*raw) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(raw, &used);
    if (used != std::string_view(raw).size() || v < lo || v > hi) throw std::out_of_range(name);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("{} must be an integer in [{}, {}], got '{}'", name, lo, hi, raw));
  }
}

std::string env_text(const char* name, std::string fallback) {
  const char* raw = std::getenv(name);
  return raw && *raw ? std::string(raw) : std::move(fallback);
}

// "/api/v1/sessions/abc/command" -> {"sessions", "abc", "command"}
std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < path.size()) {
    const auto next = path.find('/', i);
    const auto end = next == std::string_view::npos ? path.size() : next;
    if (end > i) out.emplace_back(path.substr(i, end - i));
    i = end + 1;
  }
  return out;
}

}  // namespace

Config config_from_env(Config base) {
  base.port = static_cast<int>(env_integer("POWERLAB_PORT", base.port, 1, 65535));
  base.host = env_text("POWERLAB_HOST", base.host);
  base.data_dir = env_text("POWERLAB_DATA_DIR", base.data_dir.string());
  base.session_ttl = std::chrono::seconds(env_integer("POWERLAB_SESSION_TTL", base.session_ttl.count(), 1, 365LL * 86400));
  base.model_endpoint = env_text("POWERLAB_MODEL_ENDPOINT", base.model_endpoint);
  base.corpus = env_text("POWERLAB_CORPUS", base.corpus.string());
  base.startup_delay =
      std::chrono::milliseconds(env_integer("POWERLAB_STARTUP_DELAY_MS", base.startup_delay.count(), 0, 600000));
  return base;
}

Service::Service(Config config, store::Clock clock, std::unique_ptr<session::ModelClient> model)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      model_(model ? std::move(model) : session::make_client(config_.model_endpoint)),
      corpus_(scenarios::load_corpus(config_.corpus)),
      results_(config_.data_dir.empty() ? std::filesystem::path{} : config_.data_dir / kResultLog),
      sessions_(config_.session_ttl, clock_),
      openapi_(api::dump(api::openapi_document())) {
  if (config_.startup_delay.count() > 0) std::this_thread::sleep_for(config_.startup_delay);
}

Service::~Service() { stop(); }

Response Service::handle(std::string_view method, std::string_view path, std::string_view body) {
  if (path.substr(0, api::kPrefix.size()) != api::kPrefix) return problem(404, "not_found", "no such route");
  const auto parts = segments(path.substr(api::kPrefix.size()));
  const bool get = method == "GET";
  const bool post = method == "POST";
  auto wrong_method = [&] { return problem(405, "method_not_allowed", fmt::format("{} is not allowed here", method)); };

  if (parts.size() == 1 && parts[0] == "openapi.json") return get ? Response{200, openapi_, {}} : wrong_method();
  if (parts.size() == 1 && parts[0] == "health") return get ? health() : wrong_method();
  if (!parts.empty() && parts[0] == "sessions") {
    if (parts.size() == 1) return post ? create_session() : wrong_method();
    if (parts.size() == 2) return get ? get_session(parts[1]) : wrong_method();
    if (parts.size() == 3 && parts[2] == "command") return post ? session_command(parts[1], body) : wrong_method();
  }
  if (!parts.empty() && parts[0] == "results") {
    if (parts.size() == 2) return get ? get_result(parts[1], false) : wrong_method();
    if (parts.size() == 3 && parts[2] == "response") return get ? get_result(parts[1], true) : wrong_method();
  }
  if (parts.size() == 1) {
    if (const auto* e = api::find_endpoint(parts[0])) return post ? compute(*e, body) : wrong_method();
  }
  return problem(404, "not_found", "no such route");
}

Response Service::compute(const api::Endpoint& endpoint, std::string_view body) {
  const auto outcome = api::compute(endpoint.test, body);
  Response r = json_response(outcome.status, outcome.body);
  if (outcome.status == 200) {
    const auto stored = results_.append(endpoint.name, api::dump(Json::parse(body)), r.body, std::nullopt, clock_());
    r.headers["X-Result-Id"] = stored.id;
  }
  return r;
}

Response Service::create_session() {
  const auto s = sessions_.create();
  Json j = api::to_json(s);
  j["expires_ms"] = s.updated_ms + sessions_.ttl_ms();
  Response r = json_response(201, j);
  r.headers["Location"] = fmt::format("{}sessions/{}", api::kPrefix, s.id);
  return r;
}

Response Service::session_gone(const store::SessionStore::Access& access) {
  if (access.status == store::Lookup::missing) return problem(404, "not_found", "unknown session");
  Json body = api::error_body("session_expired", fmt::format("session expired at {} ms since the epoch", access.expires_ms));
  body["expired_at_ms"] = access.expires_ms;
  return json_response(410, body);
}

Response Service::get_session(const std::string& id) {
  const auto access = sessions_.get(id);
  if (access.status != store::Lookup::found) return session_gone(access);
  Json j = api::to_json(access.state);
  j["expires_ms"] = access.expires_ms;
  return json_response(200, j);
}

Response Service::session_command(const std::string& id, std::string_view body) {
  Json request;
  try {
    request = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return problem(400, "invalid_json", e.what());
  }
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string() || request.size() != 1) {
    return problem(400, "invalid_request", "expected an object with exactly one string field 'text'");
  }
  const std::string text = request["text"].get<std::string>();

  // Resolve 404/410 before spending time on interpretation.
  if (const auto probe = sessions_.get(id); probe.status != store::Lookup::found) return session_gone(probe);

  session::Interpretation meaning;
  try {
    meaning = model_->interpret(text);
  } catch (const session::ParseError& e) {
    std::string expected;
    for (const auto& x : e.expected()) expected += (expected.empty() ? "" : ", ") + x;
    return problem(400, "parse_error",
                   fmt::format("{} (at position {}{})", e.what(), e.position(), expected.empty() ? "" : "; expected " + expected));
  }

  session::Reply reply;
  const auto access = sessions_.update(id, [&](const session::SessionState& s, std::int64_t now) {
    auto t = session::apply(s, meaning.command, now);
    reply = std::move(t.reply);
    return std::move(t.state);
  });
  if (access.status != store::Lookup::found) return session_gone(access);

  Json out;
  out["reply"] = api::to_json(reply);
  Json state = api::to_json(access.state);
  state["expires_ms"] = access.expires_ms;
  out["session"] = state;
  if (reply.result && access.state.chosen_test) {
    const auto params = session::request_params(access.state);
    const auto prepared = inputs::prepare(*access.state.chosen_test, params);
    const std::string response = api::dump(api::solve_response(prepared, *reply.result));
    const auto stored = results_.append(std::string(api::endpoint_for(*access.state.chosen_test).name),
                                        api::dump(api::params_to_json(params)), response, id, clock_());
    out["result_id"] = stored.id;
  }
  out["interpretation"] = {{"command", session::to_text(meaning.command)},
                           {"fell_back", meaning.fell_back},
                           {"diagnostics", meaning.diagnostics}};
  return json_response(200, out);
}

Response Service::get_result(const std::string& id, bool response_only) {
  const auto r = results_.get(id);
  if (!r) return problem(404, "not_found", "unknown result");
  return Response{200, response_only ? r->response : store::envelope(*r), {}};
}

Response Service::health() {
  Json j;
  j["status"] = "ok";
  j["version"] = std::string(api::kVersion);
  j["endpoints"] = api::endpoints().size();
  j["results"] = results_.size();
  j["sessions"] = sessions_.live();
  j["scenarios"] = corpus_.size();
  return json_response(200, j);
}

namespace {

constexpr std::size_t kWorkers = 128;

void install_routes(httplib::Server& server, Service& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    Response r;
    try {
      r = service.handle(req.method, req.path, req.body);
    } catch (const std::exception& e) {
      r = problem(500, "internal", e.what());
    }
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, "application/json");
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Put(".*", handler);
  server.Delete(".*", handler);
  server.Patch(".*", handler);
  server.set_payload_max_length(1 << 20);
  // One worker per connection: keep-alive clients each hold a worker.
  server.new_task_queue = [] { return new httplib::ThreadPool(kWorkers); };
}

}  // namespace

bool Service::bind() {
  server_ = std::make_unique<httplib::Server>();
  install_routes(*server_, *this);
  return server_->bind_to_port(config_.host, config_.port);
}

int Service::bind_ephemeral() {
  server_ = std::make_unique<httplib::Server>();
  install_routes(*server_, *this);
  return server_->bind_to_any_port("127.0.0.1");
}

bool Service::serve() { return server_ && server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace powerlab::service
