#include "support/service_checks.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

extern char** environ;

namespace powerlab::support {

using api::Json;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

std::string join(const Problems& problems, std::size_t limit) {
  std::string out;
  for (std::size_t i = 0; i < problems.size() && i < limit; ++i) out += (i ? "; " : "") + problems[i];
  if (problems.size() > limit) out += fmt::format("; ... {} more", problems.size() - limit);
  return out;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() / fmt::format("powerlab-{}-{}-{}", tag, ::getpid(), counter++);
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

service::Config memory_config() {
  service::Config c;
  c.data_dir.clear();
  return c;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---- goldens --------------------------------------------------------------

std::vector<GoldenCase> golden_cases() {
  const std::string p(api::kPrefix);
  std::vector<GoldenCase> cases;
  cases.push_back({"health_empty", "GET", p + "health", ""});
  cases.push_back({"openapi", "GET", p + "openapi.json", ""});
  for (const auto& e : api::endpoints()) cases.push_back({e.name + ".example", "POST", p + e.name, api::dump(e.example)});
  const std::string two = p + "two_sample_t_test";
  cases.push_back({"two_sample_t_test.power_at_4", "POST", two, R"({"delta":1.5,"sd":0.5,"n":4,"target":"power"})"});
  cases.push_back({"two_sample_t_test.effect_at_20", "POST", two, R"({"sd":0.5,"n":20,"power":0.8,"target":"effect"})"});
  cases.push_back({"two_sample_t_test.one_sided", "POST", two, R"({"delta":0.5,"sd":1,"power":0.8,"tails":"one"})"});
  cases.push_back({"two_sample_t_test.missing_sd_and_power", "POST", two, R"({"delta":1.5})"});
  cases.push_back({"two_sample_t_test.unknown_field", "POST", two, R"({"delta":1.5,"sd":0.5,"powr":0.8})"});
  cases.push_back({"two_sample_t_test.wrong_type", "POST", two, R"({"delta":"big","sd":0.5,"power":0.8})"});
  cases.push_back({"two_sample_t_test.out_of_range", "POST", two, R"({"delta":1.5,"sd":-1,"power":1.2})"});
  cases.push_back({"two_sample_t_test.invalid_json", "POST", two, R"({"delta":)"});
  cases.push_back({"two_sample_t_test.not_an_object", "POST", two, "[1,2]"});
  cases.push_back({"two_sample_t_test.get", "GET", two, ""});
  cases.push_back({"two_proportions_z_test.unreachable", "POST", p + "two_proportions_z_test",
                   R"({"p0":0.5,"p1":0.5000001,"power":0.8})"});
  cases.push_back({"log_rank_test.unequal", "POST", p + "log_rank_test",
                   R"({"hr":2,"pE":0.5,"pC":0.7,"ratio_k":2,"power":0.9})"});
  cases.push_back({"one_way_anova.means", "POST", p + "one_way_anova", R"({"means":[1,2,3],"sd":2,"power":0.8})"});
  cases.push_back({"unknown_route", "POST", p + "z_test", "{}"});
  cases.push_back({"outside_prefix", "GET", "/health", ""});
  cases.push_back({"result_envelope", "GET", p + "results/r000000000001", ""});
  cases.push_back({"result_response", "GET", p + "results/r000000000001/response", ""});
  cases.push_back({"result_missing", "GET", p + "results/r999999999999", ""});
  cases.push_back({"result_post", "POST", p + "results/r000000000001", ""});
  cases.push_back({"session_missing", "GET", p + "sessions/s0000000000000000", ""});
  cases.push_back({"session_command_shape", "POST", p + "sessions/s0000000000000000/command", R"({"txt":"solve"})"});
  cases.push_back({"health_after", "GET", p + "health", ""});
  return cases;
}

fs::path golden_dir() { return fs::path(POWERLAB_GOLDEN_DIR) / "service"; }

std::string golden_text(const service::Response& r) { return fmt::format("{}\n{}\n", r.status, r.body); }

Problems check_goldens() {
  Problems problems;
  const bool update = std::getenv("POWERLAB_UPDATE_GOLDEN") != nullptr;
  service::Service svc(memory_config(), [] { return kFixedClockMs; });
  if (update) fs::create_directories(golden_dir());
  for (const auto& c : golden_cases()) {
    const auto actual = golden_text(svc.handle(c.method, c.path, c.body));
    const auto file = golden_dir() / (c.name + ".txt");
    if (update) {
      std::ofstream(file, std::ios::binary) << actual;
      continue;
    }
    if (!fs::exists(file)) {
      problems.push_back(fmt::format("{}: missing golden file", c.name));
    } else if (read_file(file) != actual) {
      problems.push_back(fmt::format("{}: response differs from golden", c.name));
    }
  }
  return problems;
}

// ---- live service ---------------------------------------------------------

LiveService::LiveService(service::Config config)
    : service_(std::make_unique<service::Service>(std::move(config))) {
  port_ = service_->bind_ephemeral();
  if (port_ <= 0) throw std::runtime_error("cannot bind a loopback port");
  thread_ = std::thread([this] { service_->serve(); });
  for (int i = 0; i < 500 && !port_accepts(port_); ++i) std::this_thread::sleep_for(10ms);
}

LiveService::~LiveService() {
  service_->stop();
  if (thread_.joinable()) thread_.join();
}

namespace {

// Example body with a random goal and level, sometimes broken on purpose.
std::string fuzz_body(const api::Endpoint& e, std::mt19937_64& rng) {
  Json body = e.example;
  std::uniform_real_distribution<double> goal(0.5, 0.95);
  std::uniform_int_distribution<int> pick(0, 19);
  static const double alphas[] = {0.01, 0.025, 0.05, 0.1};
  body["power"] = std::round(goal(rng) * 1000) / 1000;
  body["alpha"] = alphas[pick(rng) % 4];
  switch (pick(rng)) {
    case 0: body["colour"] = 1; break;
    case 1: body["power"] = "high"; break;
    case 2: body["alpha"] = 1.5; break;
    default: break;
  }
  return api::dump(body);
}

}  // namespace

Problems concurrency_fuzz(int clients, int requests, std::uint64_t seed) {
  TempDir dir("fuzz");
  auto config = memory_config();
  config.data_dir = dir.path();
  LiveService live(config);

  std::mutex mu;
  Problems problems;
  std::map<std::string, std::string> stored;  // result id -> response body
  std::atomic<int> ok_count{0};
  auto fail = [&](std::string msg) {
    std::lock_guard lock(mu);
    problems.push_back(std::move(msg));
  };

  std::vector<std::thread> threads;
  for (int c = 0; c < clients; ++c) {
    threads.emplace_back([&, c] {
      std::mt19937_64 rng(seed + static_cast<std::uint64_t>(c) * 7919);
      httplib::Client http("127.0.0.1", live.port());
      http.set_read_timeout(60, 0);
      const auto& eps = api::endpoints();
      for (int i = 0; i < requests; ++i) {
        const auto& e = eps[rng() % eps.size()];
        const std::string body = fuzz_body(e, rng);
        const auto expect = api::compute(e.test, body);
        const auto res = http.Post(std::string(api::kPrefix) + e.name, body, "application/json");
        if (!res) {
          fail(fmt::format("client {}: request {} failed: {}", c, i, httplib::to_string(res.error())));
          continue;
        }
        if (res->status != expect.status || res->body != api::dump(expect.body)) {
          fail(fmt::format("client {}: {} {} answered {} unlike the direct computation", c, e.name, body, res->status));
          continue;
        }
        if (res->status != 200) continue;
        const std::string id = res->get_header_value("X-Result-Id");
        std::lock_guard lock(mu);
        if (id.empty() || !stored.emplace(id, res->body).second) {
          problems.push_back(fmt::format("client {}: result id '{}' missing or reused", c, id));
        }
        ++ok_count;
      }
    });
  }
  for (auto& t : threads) t.join();

  if (ok_count == 0) problems.push_back("no request succeeded");
  httplib::Client http("127.0.0.1", live.port());
  for (const auto& [id, body] : stored) {
    const auto res = http.Get(fmt::format("{}results/{}/response", api::kPrefix, id));
    if (!res || res->status != 200 || res->body != body) problems.push_back(fmt::format("{}: stored response differs", id));
  }
  // The log on disk reloads to the same set.
  const store::ResultStore reread(dir.path() / service::kResultLog);
  if (reread.size() != stored.size()) {
    problems.push_back(fmt::format("log holds {} results, {} were acknowledged", reread.size(), stored.size()));
  }
  return problems;
}

Problems restart_in_process() {
  Problems problems;
  TempDir dir("restart");
  auto config = memory_config();
  config.data_dir = dir.path();
  std::map<std::string, std::string> stored;
  std::string last_id;
  {
    service::Service svc(config);
    for (const auto& e : api::endpoints()) {
      const auto r = svc.handle("POST", std::string(api::kPrefix) + e.name, api::dump(e.example));
      if (r.status != 200) {
        problems.push_back(fmt::format("{}: example answered {}", e.name, r.status));
        continue;
      }
      last_id = r.headers.at("X-Result-Id");
      stored[last_id] = r.body;
    }
  }
  service::Service again(config);
  for (const auto& [id, body] : stored) {
    const auto r = again.handle("GET", fmt::format("{}results/{}/response", api::kPrefix, id), "");
    if (r.status != 200 || r.body != body) problems.push_back(fmt::format("{}: lost or altered across restart", id));
  }
  const auto& e = api::endpoints().front();
  const auto r = again.handle("POST", std::string(api::kPrefix) + e.name, api::dump(e.example));
  const auto next = r.headers.count("X-Result-Id") ? r.headers.at("X-Result-Id") : std::string();
  if (next <= last_id) problems.push_back(fmt::format("id after restart '{}' does not follow '{}'", next, last_id));
  return problems;
}

// ---- processes ------------------------------------------------------------

Process spawn(const std::string& binary, const std::vector<std::string>& args,
              const std::map<std::string, std::string>& env, const fs::path& scratch) {
  static std::atomic<int> counter{0};
  const int n = counter++;
  Process p;
  p.out = scratch / fmt::format("proc{}.out", n);
  p.err = scratch / fmt::format("proc{}.err", n);

  std::vector<std::string> argv_s{binary};
  argv_s.insert(argv_s.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_s;
  for (char** e = environ; *e; ++e) {
    const std::string entry(*e);
    const auto key = entry.substr(0, entry.find('='));
    if (!env.count(key)) env_s.push_back(entry);
  }
  for (const auto& [k, v] : env) env_s.push_back(k + "=" + v);
  std::vector<char*> envp;
  for (auto& e : env_s) envp.push_back(e.data());
  envp.push_back(nullptr);

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, p.out.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, p.err.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  pid_t pid = -1;
  const int rc = posix_spawn(&pid, binary.c_str(), &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw std::runtime_error(fmt::format("cannot start {}: {}", binary, std::strerror(rc)));
  p.pid = pid;
  return p;
}

std::optional<int> wait_exit(const Process& p, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    int status = 0;
    const pid_t r = ::waitpid(p.pid, &status, WNOHANG);
    if (r == p.pid) return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    if (r < 0) return -1;
    if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(10ms);
  }
}

void terminate(const Process& p) {
  ::kill(p.pid, SIGTERM);
  if (!wait_exit(p, 5s)) {
    ::kill(p.pid, SIGKILL);
    wait_exit(p, 5s);
  }
}

int free_port() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = 0;
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  return ntohs(addr.sin_port);
}

bool port_accepts(int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const bool ok = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0;
  ::close(fd);
  return ok;
}

std::string cli_binary() { return POWERLAB_CLI_BINARY; }

namespace {

// Polls health until it answers 200; false on timeout or early exit.
bool wait_ready(const Process& p, int port, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  httplib::Client http("127.0.0.1", port);
  http.set_connection_timeout(0, 200000);
  while (std::chrono::steady_clock::now() < deadline) {
    if (const auto res = http.Get(std::string(api::kPrefix) + "health"); res && res->status == 200) return true;
    int status = 0;
    if (::waitpid(p.pid, &status, WNOHANG) == p.pid) return false;
    std::this_thread::sleep_for(20ms);
  }
  return false;
}

}  // namespace

Problems restart_process() {
  Problems problems;
  TempDir dir("proc-restart");
  const fs::path data = dir.path() / "data";
  const int port = free_port();
  const std::vector<std::string> args{"serve", "--port", std::to_string(port), "--data-dir", data.string()};

  std::map<std::string, std::string> stored;
  auto first = spawn(cli_binary(), args, {}, dir.path());
  if (!wait_ready(first, port, 15s)) {
    terminate(first);
    return {"first server never became ready: " + read_file(first.err)};
  }
  {
    httplib::Client http("127.0.0.1", port);
    for (const auto& e : api::endpoints()) {
      const auto res = http.Post(std::string(api::kPrefix) + e.name, api::dump(e.example), "application/json");
      if (!res || res->status != 200) {
        problems.push_back(fmt::format("{}: example failed before restart", e.name));
        continue;
      }
      stored[res->get_header_value("X-Result-Id")] = res->body;
    }
  }
  ::kill(first.pid, SIGTERM);
  const auto code = wait_exit(first, 10s);
  if (code != 0) problems.push_back(fmt::format("server exit after SIGTERM: {}", code ? std::to_string(*code) : "none"));
  if (!code) terminate(first);

  auto second = spawn(cli_binary(), args, {}, dir.path());
  if (!wait_ready(second, port, 15s)) {
    terminate(second);
    problems.push_back("restarted server never became ready: " + read_file(second.err));
    return problems;
  }
  httplib::Client http("127.0.0.1", port);
  for (const auto& [id, body] : stored) {
    const auto res = http.Get(fmt::format("{}results/{}/response", api::kPrefix, id));
    if (!res || res->status != 200 || res->body != body) problems.push_back(fmt::format("{}: not durable", id));
  }
  if (const auto res = http.Get(std::string(api::kPrefix) + "health"); res) {
    const auto health = Json::parse(res->body);
    if (health.value("results", 0u) != stored.size()) problems.push_back("health result count differs after restart");
  }
  terminate(second);
  return problems;
}

Problems readiness_probe(int port, std::chrono::milliseconds delay) {
  Problems problems;
  if (port_accepts(port)) return {fmt::format("port {} is already in use", port)};
  TempDir dir("ready");
  std::vector<std::string> args{"serve"};
  if (port != 5000) args.insert(args.end(), {"--port", std::to_string(port)});
  const std::map<std::string, std::string> env{{"POWERLAB_STARTUP_DELAY_MS", std::to_string(delay.count())},
                                               {"POWERLAB_DATA_DIR", (dir.path() / "data").string()}};
  const auto start = std::chrono::steady_clock::now();
  auto p = spawn(cli_binary(), args, env, dir.path());

  // Early probes during initialization must be refused.
  int early = 0;
  while (std::chrono::steady_clock::now() - start < delay * 3 / 4) {
    if (port_accepts(port)) {
      problems.push_back(fmt::format("port accepted a connection {} ms into a {} ms initialization",
                                     std::chrono::duration_cast<std::chrono::milliseconds>(
                                         std::chrono::steady_clock::now() - start).count(),
                                     delay.count()));
      break;
    }
    ++early;
    std::this_thread::sleep_for(25ms);
  }
  if (early == 0) problems.push_back("no probe landed inside the initialization window");

  if (!wait_ready(p, port, delay + 15s)) {
    problems.push_back("server never became ready: " + read_file(p.err));
  } else {
    httplib::Client http("127.0.0.1", port);
    const auto res = http.Get(std::string(api::kPrefix) + "health");
    const auto health = res ? Json::parse(res->body) : Json();
    if (!res || res->status != 200 || health.value("status", "") != "ok" ||
        health.value("endpoints", 0u) != api::endpoints().size()) {
      problems.push_back("health after readiness: " + (res ? res->body : std::string("no answer")));
    }
  }
  terminate(p);
  return problems;
}

Problems corrupt_corpus_refuses() {
  Problems problems;
  TempDir dir("corpus");
  const fs::path corpus = dir.path() / "broken.jsonl";
  {
    std::ifstream good(scenarios::default_corpus_path());
    std::string line;
    std::ofstream out(corpus);
    out << "# first line is a comment\n";
    while (std::getline(good, line)) {
      if (!line.empty() && line[0] == '{') {
        out << line << "\n";
        break;
      }
    }
    out << "{\"id\": \"broken\", \"prose\": \n";
  }
  const int port = free_port();
  auto p = spawn(cli_binary(), {"serve", "--port", std::to_string(port), "--corpus", corpus.string(), "--data-dir",
                                (dir.path() / "data").string()},
                 {}, dir.path());
  const auto code = wait_exit(p, 15s);
  if (!code) {
    problems.push_back("serve kept running with a corrupt corpus");
    terminate(p);
  } else if (*code == 0) {
    problems.push_back("serve exited 0 with a corrupt corpus");
  }
  const auto err = read_file(p.err);
  if (err.find(corpus.string() + ":3:") == std::string::npos) problems.push_back("stderr does not name line 3: " + err);
  if (port_accepts(port)) problems.push_back("port is listening");
  return problems;
}

}  // namespace powerlab::support
