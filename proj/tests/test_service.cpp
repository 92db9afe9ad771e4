#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include <httplib.h>

#include "powerlab/service.hpp"
#include "support/service_checks.hpp"

using namespace powerlab;
using api::Json;
using support::TempDir;

namespace {

std::string route(const std::string& tail) { return std::string(api::kPrefix) + tail; }

Json body_of(const service::Response& r) { return Json::parse(r.body); }

struct ManualClock {
  std::int64_t now = support::kFixedClockMs;
  store::Clock fn() {
    return [this] { return now; };
  }
};

}  // namespace

TEST_CASE("golden responses") {
  const auto problems = support::check_goldens();
  INFO(support::join(problems, 50));
  CHECK(problems.empty());
}

TEST_CASE("every endpoint has its own route and answers its example") {
  service::Service svc(support::memory_config());
  CHECK(api::endpoints().size() == 13);
  for (const auto& e : api::endpoints()) {
    CAPTURE(e.name);
    const auto r = svc.handle("POST", route(e.name), api::dump(e.example));
    CHECK(r.status == 200);
    CHECK(body_of(r)["test"] == std::string(to_string(e.test)));
    REQUIRE(r.headers.count("X-Result-Id") == 1);
    const auto stored = svc.handle("GET", route("results/" + r.headers.at("X-Result-Id") + "/response"), "");
    CHECK(stored.status == 200);
    CHECK(stored.body == r.body);
  }
}

TEST_CASE("reference values over the wire") {
  service::Service svc(support::memory_config());
  SUBCASE("two-sample t at 4 per arm") {
    const auto r = svc.handle("POST", route("two_sample_t_test"), R"({"delta":1.5,"sd":0.5,"power":0.8})");
    const auto j = body_of(r);
    CHECK(j["sample_size"] == 4);
    CHECK(j["n_per_arm"] == Json::array({4, 4}));
    CHECK(j["achieved_power"].get<double>() == doctest::Approx(0.9389357455090219).epsilon(1e-9));
  }
  SUBCASE("log-rank events and arms") {
    const auto j = body_of(svc.handle("POST", route("log_rank_test"), R"({"hr":2,"pE":0.5,"pC":0.7,"power":0.9})"));
    CHECK(j["events_required"] == 95);
    CHECK(j["n_per_arm"] == Json::array({79, 79}));
  }
  SUBCASE("missing fields are all reported") {
    const auto r = svc.handle("POST", route("two_sample_t_test"), R"({"delta":1.5})");
    CHECK(r.status == 400);
    const auto j = body_of(r);
    CHECK(j["error"] == "invalid_request");
    std::set<std::string> fields;
    for (const auto& e : j["errors"]) fields.insert(e["field"].get<std::string>());
    CHECK(fields == std::set<std::string>{"power", "sd"});
  }
  SUBCASE("unknown fields are rejected, not ignored") {
    const auto r = svc.handle("POST", route("two_sample_t_test"), R"({"delta":1.5,"sd":0.5,"power":0.8,"alpah":0.01})");
    CHECK(r.status == 400);
    CHECK(body_of(r)["errors"][0]["field"] == "alpah");
  }
  SUBCASE("unreachable goal") {
    const auto r = svc.handle("POST", route("two_proportions_z_test"), R"({"p0":0.5,"p1":0.5000001,"power":0.8})");
    CHECK(r.status == 422);
    CHECK(body_of(r)["error"] == "unreachable");
  }
}

TEST_CASE("routing errors") {
  service::Service svc(support::memory_config());
  CHECK(svc.handle("GET", route("two_sample_t_test"), "").status == 405);
  CHECK(svc.handle("DELETE", route("health"), "").status == 405);
  CHECK(svc.handle("POST", route("nope"), "{}").status == 404);
  CHECK(svc.handle("GET", "/other", "").status == 404);
  CHECK(svc.handle("GET", route("results/r1"), "").status == 404);
  CHECK(svc.handle("GET", route("sessions/none"), "").status == 404);
}

TEST_CASE("health and openapi") {
  service::Service svc(support::memory_config());
  const auto h = body_of(svc.handle("GET", route("health"), ""));
  CHECK(h["status"] == "ok");
  CHECK(h["endpoints"] == 13);
  CHECK(h["scenarios"].get<int>() >= 1);
  const auto doc = body_of(svc.handle("GET", route("openapi.json"), ""));
  CHECK(doc["openapi"].get<std::string>().rfind("3.1", 0) == 0);
  for (const auto& e : api::endpoints()) CHECK(doc["paths"].contains(route(e.name)));
}

TEST_CASE("sessions over the service") {
  ManualClock clock;
  auto config = support::memory_config();
  config.session_ttl = std::chrono::seconds(60);
  service::Service svc(config, clock.fn());

  const auto created = svc.handle("POST", route("sessions"), "");
  REQUIRE(created.status == 201);
  const std::string id = body_of(created)["id"];
  CHECK(created.headers.at("Location") == route("sessions/" + id));
  const std::string cmd = route("sessions/" + id + "/command");

  auto say = [&](const std::string& text) { return svc.handle("POST", cmd, api::dump(Json{{"text", text}})); };

  SUBCASE("a conversation composes into a stored result") {
    CHECK(say("describe binary 2 groups").status == 200);
    CHECK(say("set p0 0.18, p1 0.14, power 0.8").status == 200);
    const auto solved = say("solve n");
    REQUIRE(solved.status == 200);
    const auto j = body_of(solved);
    CHECK(j["reply"]["result"]["n_per_arm"] == Json::array({1318, 1318}));
    REQUIRE(j.contains("result_id"));
    const auto stored = body_of(svc.handle("GET", route("results/" + j["result_id"].get<std::string>()), ""));
    CHECK(stored["session_id"] == id);
    CHECK(stored["response"]["sample_size"] == 1318);

    // The same numbers through the stateless endpoint. The session adopted
    // its defaults explicitly, so only that list differs.
    auto direct = body_of(svc.handle("POST", route("two_proportions_z_test"), R"({"p0":0.18,"p1":0.14,"power":0.8})"));
    auto via_session = stored["response"];
    direct.erase("defaults_applied");
    via_session.erase("defaults_applied");
    CHECK(direct == via_session);

    const auto state = body_of(svc.handle("GET", route("sessions/" + id), ""));
    CHECK(state["history"].size() == 3);
    CHECK(state["test"] == "two_proportions_z");
  }

  SUBCASE("bad commands") {
    CHECK(svc.handle("POST", cmd, "{").status == 400);
    CHECK(svc.handle("POST", cmd, R"({"text":"x","extra":1})").status == 400);
    const auto r = say("frobnicate everything");
    CHECK(r.status == 400);
    CHECK(body_of(r)["error"] == "parse_error");
  }

  SUBCASE("expiry answers 410 with the expiry time") {
    CHECK(say("describe binary 2 groups").status == 200);
    const auto expires = body_of(svc.handle("GET", route("sessions/" + id), ""))["expires_ms"].get<std::int64_t>();
    CHECK(expires == clock.now + 60000);
    clock.now += 59999;
    CHECK(svc.handle("GET", route("sessions/" + id), "").status == 200);
    clock.now = expires;
    const auto gone = svc.handle("GET", route("sessions/" + id), "");
    CHECK(gone.status == 410);
    CHECK(body_of(gone)["expired_at_ms"] == expires);
    CHECK(say("solve").status == 410);
    CHECK(svc.handle("GET", route("sessions/unknown"), "").status == 404);
  }
}

TEST_CASE("model fixture drives a session") {
  auto model = std::make_unique<session::FixtureClient>(std::map<std::string, std::string, std::less<>>{
      {"binary outcome, two arms", R"({"verb":"describe","args":{"outcome":"binary","groups":"2"}})"},
      {"Let's instead assume an 18% baseline incidence aiming to measure a 4% absolute risk reduction with treatment",
       R"({"verb":"set","args":{"baseline":"18%","absolute-risk-reduction":"4%"}})"},
  });
  service::Service svc(support::memory_config(), store::system_now_ms, std::move(model));
  const std::string id = body_of(svc.handle("POST", route("sessions"), ""))["id"];
  auto say = [&](const std::string& text) {
    return body_of(svc.handle("POST", route("sessions/" + id + "/command"), api::dump(Json{{"text", text}})));
  };
  CHECK(say("binary outcome, two arms")["interpretation"]["fell_back"] == false);
  const auto set = say(
      "Let's instead assume an 18% baseline incidence aiming to measure a 4% absolute risk reduction with treatment");
  CHECK(set["session"]["known"]["p0"] == 0.18);
  CHECK(set["session"]["known"]["p1"].get<double>() == doctest::Approx(0.14).epsilon(1e-12));
  const auto fallback = say("set power 80%");
  CHECK(fallback["interpretation"]["fell_back"] == true);
  CHECK(say("solve n")["reply"]["result"]["n_per_arm"] == Json::array({1318, 1318}));
}

TEST_CASE("result log") {
  TempDir dir("log");
  const auto path = dir.path() / "results.ndjson";
  std::string first_id;
  {
    store::ResultStore s(path);
    first_id = s.append("a", "{}", R"({"x":1.10})", std::nullopt, 5).id;
    s.append("b", "{}", "{}", std::string("s1"), 6);
  }
  SUBCASE("reload keeps bytes and continues ids") {
    store::ResultStore s(path);
    CHECK(s.size() == 2);
    CHECK(s.get(first_id)->response == R"({"x":1.10})");
    CHECK(s.get("r000000000002")->session_id == "s1");
    CHECK(s.append("c", "{}", "{}", std::nullopt, 7).id == "r000000000003");
  }
  SUBCASE("a torn final line is dropped") {
    std::ofstream(path, std::ios::app) << R"({"id":"r000000000003","times)";
    store::ResultStore s(path);
    CHECK(s.size() == 2);
  }
  SUBCASE("a corrupt line in the middle is fatal and located") {
    const std::string text = support::read_file(path);
    std::ofstream(path, std::ios::trunc) << "garbage\n" << text;
    try {
      store::ResultStore s(path);
      FAIL("expected CorruptLog");
    } catch (const store::CorruptLog& e) {
      CHECK(std::string(e.what()).find(":1:") != std::string::npos);
    }
  }
}

TEST_CASE("configuration from the environment") {
  for (const char* v : {"POWERLAB_PORT", "POWERLAB_HOST", "POWERLAB_DATA_DIR", "POWERLAB_SESSION_TTL",
                        "POWERLAB_MODEL_ENDPOINT", "POWERLAB_CORPUS", "POWERLAB_STARTUP_DELAY_MS"}) {
    ::unsetenv(v);
  }
  SUBCASE("defaults") {
    const auto c = service::config_from_env();
    CHECK(c.port == 5000);
    CHECK(c.host == "0.0.0.0");
    CHECK(c.session_ttl == std::chrono::seconds(86400));
    CHECK(c.startup_delay.count() == 0);
    CHECK(c.model_endpoint.empty());
  }
  SUBCASE("overrides") {
    ::setenv("POWERLAB_PORT", "8123", 1);
    ::setenv("POWERLAB_SESSION_TTL", "30", 1);
    const auto c = service::config_from_env();
    CHECK(c.port == 8123);
    CHECK(c.session_ttl == std::chrono::seconds(30));
    ::unsetenv("POWERLAB_PORT");
    ::unsetenv("POWERLAB_SESSION_TTL");
  }
  SUBCASE("malformed values are refused") {
    for (const char* bad : {"0", "70000", "80x", "-1"}) {
      ::setenv("POWERLAB_PORT", bad, 1);
      CHECK_THROWS_AS(service::config_from_env(), std::invalid_argument);
    }
    ::unsetenv("POWERLAB_PORT");
  }
}

TEST_CASE("a corrupt corpus stops initialization") {
  TempDir dir("corpus");
  const auto path = dir.path() / "c.jsonl";
  std::ofstream(path) << "# header\n\n{\"id\": 3}\n";
  auto config = support::memory_config();
  config.corpus = path;
  try {
    service::Service svc(config);
    FAIL("expected CorpusError");
  } catch (const scenarios::CorpusError& e) {
    CHECK(std::string(e.what()).find(path.string() + ":3:") == 0);
  }
}

TEST_CASE("restart keeps results") {
  const auto problems = support::restart_in_process();
  INFO(support::join(problems));
  CHECK(problems.empty());
}

TEST_CASE("concurrent clients") {
  const auto problems = support::concurrency_fuzz(16, 8, 20261018);
  INFO(support::join(problems));
  CHECK(problems.empty());
}

TEST_CASE("http transport carries headers and status") {
  support::LiveService live(support::memory_config());
  httplib::Client http("127.0.0.1", live.port());
  const auto ok = http.Post(route("two_sample_t_test"), R"({"delta":1.5,"sd":0.5,"power":0.8})", "application/json");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  CHECK(ok->get_header_value("Content-Type") == "application/json");
  CHECK(!ok->get_header_value("X-Result-Id").empty());
  const auto wrong = http.Put(route("health"), "", "application/json");
  REQUIRE(wrong);
  CHECK(wrong->status == 405);
}
