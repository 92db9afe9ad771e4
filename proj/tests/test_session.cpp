#include <doctest.h>

#include <fmt/format.h>
#include <httplib.h>

#include <random>
#include <thread>

#include "powerlab/command.hpp"
#include "powerlab/model_client.hpp"
#include "powerlab/session.hpp"

using namespace powerlab;
using namespace powerlab::session;

namespace {

SessionState run(const std::vector<std::string>& lines, std::int64_t t0 = 1000) {
  SessionState s = fresh("s1", t0);
  std::int64_t t = t0;
  for (const auto& line : lines) s = apply(s, parse_command(line), ++t).state;
  return s;
}

const Reply& last_reply(const SessionState& s) { return s.history.back().reply; }

double num(const Command& c, std::size_t i) { return std::get<double>(c.assignments.at(i).second); }

}  // namespace

TEST_CASE("grammar: examples") {
  auto c = parse_command("set baseline 18%");
  CHECK(c.verb == Verb::set);
  REQUIRE(c.assignments.size() == 1);
  CHECK(c.assignments[0].first == "p0");
  CHECK(num(c, 0) == 0.18);

  c = parse_command("set absolute-risk-reduction 4%");
  CHECK(c.assignments[0].first == "arr");
  CHECK(num(c, 0) == 0.04);

  c = parse_command("solve n");
  CHECK(c.verb == Verb::solve);
  CHECK(c.target == Target::sample_size);

  c = parse_command("SET Alpha=0.01, pE 0.5 and hazard-ratio 2");
  REQUIRE(c.assignments.size() == 3);
  CHECK(c.assignments[0].first == "alpha");
  CHECK(c.assignments[1].first == "pE");
  CHECK(c.assignments[2].first == "hr");

  c = parse_command("set means [1, 2.5, 4] tails one");
  CHECK(std::get<std::vector<double>>(c.assignments[0].second) == std::vector<double>{1, 2.5, 4});
  CHECK(std::get<std::string>(c.assignments[1].second) == "one");

  c = parse_command("describe binary 2 groups independent");
  CHECK(c.descriptor == std::map<std::string, std::string>{{"groups", "2"}, {"outcome", "binary"}, {"pairing", "independent"}});

  c = parse_command("describe outcome=survival adjusted");
  CHECK(c.descriptor.at("outcome") == "time_to_event");
  CHECK(c.descriptor.at("covariates") == "yes");

  c = parse_command("choose two_proportions_z");
  CHECK(c.test == TestId::two_proportions_z);
  CHECK(parse_command("unset p0 p1").names == std::vector<std::string>{"p0", "p1"});
  CHECK(parse_command("explain Baseline").topic == "p0");
  CHECK(parse_command("export").verb == Verb::export_transcript);
}

TEST_CASE("grammar: percent shifting is textual") {
  CHECK(shift_percent("18") == "0.18");
  CHECK(shift_percent("4") == "0.04");
  CHECK(shift_percent("12.5") == "0.125");
  CHECK(shift_percent("150") == "1.50");
  CHECK(shift_percent("-3") == "-0.03");
  for (int i = 0; i <= 10000; ++i) {
    const std::string pct = fmt::format("{}.{:02}", i / 100, i % 100);
    const double a = num(parse_command("set p0 " + pct + "%"), 0);
    const double b = std::strtod(shift_percent(pct).c_str(), nullptr);
    REQUIRE(a == b);
  }
  CHECK(num(parse_command("set p0 18%"), 0) == num(parse_command("set p0 0.18"), 0));
}

TEST_CASE("grammar: errors carry position and expected set") {
  try {
    parse_command("set basline 0.2");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 4);
    CHECK(std::string(e.what()).find("did you mean 'baseline'") != std::string::npos);
    CHECK(e.expected() == std::vector<std::string>{"parameter name"});
  }
  try {
    parse_command("frobnicate");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.position() == 0);
    CHECK(std::find(e.expected().begin(), e.expected().end(), "solve") != e.expected().end());
  }
  CHECK_THROWS_AS(parse_command(""), ParseError);
  CHECK_THROWS_AS(parse_command("set"), ParseError);
  CHECK_THROWS_AS(parse_command("set p0"), ParseError);
  CHECK_THROWS_AS(parse_command("set p0 0.2 extra"), ParseError);
  CHECK_THROWS_AS(parse_command("set tails three"), ParseError);
  CHECK_THROWS_AS(parse_command("set means [1, 2"), ParseError);
  CHECK_THROWS_AS(parse_command("solve everything"), ParseError);
  CHECK_THROWS_AS(parse_command("choose z_test"), ParseError);
  CHECK_THROWS_AS(parse_command("describe outcome=weird"), ParseError);
  CHECK_THROWS_AS(parse_command("set p0 1e-2%"), ParseError);
  CHECK_THROWS_AS(parse_command("set p0 $"), ParseError);
}

TEST_CASE("grammar: printed commands reparse to equal commands") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5);
  const std::vector<std::string> numeric = {"delta", "sd", "ratio", "f", "eta2", "p0", "p1", "w", "r", "hr", "pE",
                                            "alpha", "power", "n", "psi", "rho2", "are", "arr"};
  for (int i = 0; i < 2000; ++i) {
    Command c;
    switch (rng() % 8) {
      case 0:
        c.verb = Verb::describe;
        c.descriptor = {{"outcome", "binary"}, {"groups", std::to_string(1 + rng() % 5)}};
        if (rng() % 2) c.descriptor["pairing"] = "paired";
        break;
      case 1:
        c.verb = Verb::choose;
        c.test = kAllTests[rng() % kAllTests.size()];
        break;
      case 2:
      case 3: {
        c.verb = rng() % 2 ? Verb::set : Verb::whatif;
        const int k = 1 + static_cast<int>(rng() % 4);
        for (int j = 0; j < k; ++j) {
          const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 9) - 4);
          c.assignments.emplace_back(numeric[rng() % numeric.size()], x);
        }
        if (rng() % 3 == 0) c.assignments.emplace_back("means", std::vector<double>{u(rng), u(rng), u(rng)});
        if (rng() % 3 == 0) c.assignments.emplace_back("tails", std::string(rng() % 2 ? "one" : "two"));
        break;
      }
      case 4:
        c.verb = Verb::unset;
        c.names = {"p0", "alpha"};
        break;
      case 5:
        c.verb = Verb::solve;
        if (rng() % 2) c.target = static_cast<Target>(rng() % 3);
        break;
      case 6:
        c.verb = Verb::explain;
        if (rng() % 2) c.topic = "result";
        break;
      default: c.verb = Verb::export_transcript; break;
    }
    const std::string text = to_text(c);
    const Command back = parse_command(text);
    REQUIRE_MESSAGE(back == c, text);
    REQUIRE(to_text(back) == text);
  }
}

TEST_CASE("session: describe picks the test and lists what is missing") {
  auto s = run({"describe binary 2 groups"});
  REQUIRE(s.chosen_test == TestId::two_proportions_z);
  CHECK(s.pending == std::vector<std::string>{"p0", "p1", "ratio", "alpha", "tails", "power"});
  const auto& r = last_reply(s);
  CHECK(r.recommendation.has_value());
  REQUIRE(r.prompt.has_value());
  CHECK(r.prompt->rfind("What is p0", 0) == 0);
  CHECK_FALSE(r.explanation.empty());
}

TEST_CASE("session: incoherent descriptions and early solves are replies") {
  auto s = run({"describe time_to_event 3 groups"});
  CHECK_FALSE(last_reply(s).ok);
  CHECK_FALSE(s.chosen_test.has_value());
  s = run({"solve n"});
  CHECK_FALSE(last_reply(s).ok);
  CHECK_FALSE(last_reply(s).result.has_value());
  s = run({"describe groups=2"});
  CHECK(last_reply(s).prompt.has_value());
  CHECK_FALSE(s.chosen_test.has_value());
}

TEST_CASE("session: two proportions 0.18 vs 0.14") {
  auto s = run({"describe binary 2 groups", "set p0 0.18, p1 0.14, alpha 0.05, power 0.8", "solve n"});
  const auto& r = last_reply(s);
  REQUIRE(r.result.has_value());
  CHECK(r.result->allocation.arms == std::vector<long>{1318, 1318});
  CHECK(r.result->formula_id == "normal_approx.two_proportions_pooled");
  CHECK(r.assumed == std::vector<std::string>{"ratio", "tails"});
  CHECK(s.pending.empty());

  const std::size_t before = s.history.size();
  const auto original = s.history.back();
  s = apply(s, parse_command("whatif power 0.9"), 99999).state;
  REQUIRE(s.history.size() == before + 1);
  CHECK(s.history[before - 1] == original);
  REQUIRE(last_reply(s).result.has_value());
  CHECK(last_reply(s).result->allocation.arms == std::vector<long>{1764, 1764});
}

TEST_CASE("session: 18% baseline with a 4% absolute risk reduction") {
  auto pct = run({"describe binary 2 groups", "set baseline 18%", "set absolute-risk-reduction 4%", "set power 80%",
                  "solve n"});
  auto dec = run({"describe binary 2 groups", "set baseline 0.18", "set absolute-risk-reduction 0.04", "set power 0.8",
                  "solve n"});
  CHECK(std::get<double>(pct.known.at("p1")) == 0.14);
  CHECK(pct.known == dec.known);
  REQUIRE(last_reply(pct).result.has_value());
  CHECK(last_reply(pct).result->allocation.arms == std::vector<long>{1318, 1318});
  CHECK(last_reply(pct).result == last_reply(dec).result);

  auto no_base = run({"describe binary 2 groups", "set arr 4%"});
  CHECK_FALSE(last_reply(no_base).ok);
  CHECK_FALSE(no_base.known.count("p1"));
}

TEST_CASE("session: set validates atomically") {
  auto s = run({"describe binary 2 groups", "set p0 0.2"});
  const auto known = s.known;
  s = apply(s, parse_command("set p1 0.1, power 1.2"), 5000).state;
  CHECK_FALSE(last_reply(s).ok);
  CHECK(s.known == known);
  REQUIRE(last_reply(s).errors.size() == 1);
  CHECK(last_reply(s).errors[0].field == "power");
  s = apply(s, parse_command("set hr 2"), 5001).state;
  CHECK_FALSE(last_reply(s).ok);
  CHECK(last_reply(s).errors[0].message == "not accepted by two_proportions_z");
}

TEST_CASE("session: alternatives replace each other and choose prunes") {
  auto s = run({"choose one_way_anova", "set f 0.25", "set eta2 0.06"});
  CHECK_FALSE(s.known.count("f"));
  CHECK(s.known.count("eta2"));
  s = run({"choose one_way_anova", "set means [1, 2, 3]"});
  CHECK(std::find(s.pending.begin(), s.pending.end(), "sd") != s.pending.end());
  CHECK(std::find(s.pending.begin(), s.pending.end(), "k") == s.pending.end());
  s = run({"choose two_sample_t", "set delta 1.5, sd 0.5, ratio 2", "choose one_sample_t"});
  CHECK_FALSE(s.known.count("ratio"));
  CHECK(s.known.count("delta"));
}

TEST_CASE("session: other targets") {
  auto s = run({"choose two_sample_t", "set delta 1.5, sd 0.5, n 4", "solve power"});
  REQUIRE(last_reply(s).result.has_value());
  CHECK(last_reply(s).result->achieved_power == doctest::Approx(0.938935745509).epsilon(1e-10));
  s = apply(s, parse_command("set power 0.8"), 1e6).state;
  s = apply(s, parse_command("solve effect"), 1e6 + 1).state;
  REQUIRE(last_reply(s).result.has_value());
  CHECK(*last_reply(s).result->effect_solved == doctest::Approx(2.3807542132711963 * 0.5).epsilon(1e-6));
  auto p = run({"choose log_rank", "set hr 2, pE 0.5, pC 0.7, power 0.9", "solve"});
  REQUIRE(last_reply(p).result.has_value());
  CHECK(last_reply(p).result->events_required == 95);
  CHECK(last_reply(p).result->allocation.arms == std::vector<long>{79, 79});
}

TEST_CASE("session: explain and export") {
  auto s = run({"describe binary 2 groups", "set p0 0.18, p1 0.14, power 0.8", "solve n", "explain", "explain p0",
                "explain result", "explain test", "export"});
  const auto& h = s.history;
  CHECK(h[3].reply.explanation.find("Known:") != std::string::npos);
  CHECK(h[4].reply.explanation.find("Current value: 0.18") != std::string::npos);
  CHECK(h[5].reply.explanation.find("normal_approx.two_proportions_pooled") != std::string::npos);
  CHECK(h[6].reply.explanation == h[0].reply.explanation);
  const std::string& t = h[7].reply.transcript;
  CHECK(t.find("[3] solve sample_size") != std::string::npos);
  CHECK(t.find("formula_id: normal_approx.two_proportions_pooled") != std::string::npos);
  CHECK(t.find("allocation: 1318 1318 (total 2636)") != std::string::npos);
  auto bad = run({"explain nonsense"});
  CHECK_FALSE(last_reply(bad).ok);
}

TEST_CASE("session: replay and invariants over random histories") {
  const std::vector<std::string> pool = {
      "describe binary 2 groups", "describe continuous 2 groups", "describe continuous paired",
      "describe survival",        "describe binary 1 group",      "describe continuous 3 groups nonparametric",
      "choose two_sample_t",      "choose log_rank",              "choose correlation",
      "set p0 0.3",               "set p1 0.2",                   "set arr 5%",
      "set delta 0.5, sd 1",      "set power 0.8",                "set power 0.9",
      "set alpha 0.01",           "set hr 0.6, pE 0.4, pC 0.5",   "set r 0.3",
      "set f 0.25, k 3",          "set n 40",                     "set tails one",
      "set power 1.5",            "unset power",                  "unset p1 delta",
      "solve",                    "solve n",                      "solve power",
      "solve effect",             "whatif power 0.85",            "whatif alpha 0.1",
      "explain",                  "explain result",               "export"};
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    SessionState s = fresh(fmt::format("t{}", trial), 1000 + trial);
    std::int64_t t = 1000 + trial;
    const int steps = 1 + static_cast<int>(rng() % 25);
    for (int i = 0; i < steps; ++i) {
      auto next = apply(s, parse_command(pool[rng() % pool.size()]), t += 1 + static_cast<int>(rng() % 1000));
      // Append-only history.
      REQUIRE(next.state.history.size() == s.history.size() + 1);
      for (std::size_t j = 0; j < s.history.size(); ++j) REQUIRE(next.state.history[j] == s.history[j]);
      s = std::move(next.state);
      // A result only exists when nothing is pending.
      if (last_reply(s).result) REQUIRE(s.pending.empty());
      // pending plus known covers the checklist.
      if (s.chosen_test) {
        for (const auto& e : inputs::checklist(*s.chosen_test, s.target)) {
          bool covered = s.known.count(e.name) ||
                         std::find(s.pending.begin(), s.pending.end(), e.name) != s.pending.end();
          for (const auto& a : e.alternatives) covered = covered || s.known.count(a);
          if (e.name == "k") covered = covered || s.known.count("means");
          REQUIRE_MESSAGE(covered, e.name);
        }
      }
    }
    REQUIRE(replay(s) == s);
  }
}

TEST_CASE("model client: stub, fixture and fallback") {
  StubClient stub;
  CHECK(stub.interpret("set power 0.9").command == parse_command("set power 0.9"));
  CHECK_FALSE(stub.interpret("set power 0.9").fell_back);

  FixtureClient fixture({
      {"Let's instead assume an 18% baseline incidence aiming to measure a 4% absolute risk reduction with treatment",
       R"({"verb":"set","args":{"baseline":"18%","absolute-risk-reduction":"4%"}})"},
      {"we need ninety percent power", R"({"verb":"whatif","args":{"power":0.9}})"},
      {"set power 0.7", "Sure! I set the power to 0.7."},
      {"solve n", R"({"verb":"launch","args":{}})"},
  });
  auto i = fixture.interpret(
      "Let's instead assume an 18% baseline incidence aiming to measure a 4% absolute risk reduction with treatment");
  CHECK_FALSE(i.fell_back);
  CHECK(i.command == parse_command("set p0 0.18, arr 0.04"));
  CHECK(fixture.interpret("we need ninety percent power").command == parse_command("whatif power 0.9"));

  i = fixture.interpret("set power 0.7");
  CHECK(i.fell_back);
  CHECK(i.command == parse_command("set power 0.7"));
  REQUIRE(i.diagnostics.size() == 1);
  CHECK(i.diagnostics[0].find("not JSON") != std::string::npos);

  i = fixture.interpret("solve n");
  CHECK(i.fell_back);
  CHECK(i.diagnostics[0].find("unknown verb") != std::string::npos);

  CHECK(fixture.interpret("export").fell_back);
  CHECK_THROWS_AS(fixture.interpret("gibberish words"), ParseError);

  for (const char* text : {"describe binary 2 groups", "set means [1, 2, 3], tails one", "unset p0 p1", "solve power",
                           "choose log_rank", "explain p0", "export"}) {
    const Command c = parse_command(text);
    CHECK(command_from_json(command_to_json(c)) == c);
  }
}

TEST_CASE("model client: HTTP endpoint and degraded network") {
  httplib::Server server;
  server.Post("/interpret", [](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    if (body.at("text").get<std::string>().rfind("solve", 0) == 0) {
      res.status = 503;
      return;
    }
    res.set_content(R"({"verb":"set","args":{"power":0.9}})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpClient client(fmt::format("http://127.0.0.1:{}/interpret", port), std::chrono::milliseconds(2000));
  auto i = client.interpret("please use ninety percent");
  CHECK_FALSE(i.fell_back);
  CHECK(i.command == parse_command("set power 0.9"));
  i = client.interpret("solve power");
  CHECK(i.fell_back);
  CHECK(i.command == parse_command("solve power"));
  CHECK(i.diagnostics[0].find("HTTP 503") != std::string::npos);
  CHECK_THROWS_AS(client.interpret("solve everything"), ParseError);
  server.stop();
  th.join();

  HttpClient dead(fmt::format("http://127.0.0.1:{}/interpret", port), std::chrono::milliseconds(200));
  i = dead.interpret("solve n");
  CHECK(i.fell_back);
  CHECK(i.command == parse_command("solve n"));
  CHECK(i.diagnostics[0].find("unavailable") != std::string::npos);
}
