#pragma once

// HTTP JSON service. Routing lives in Service::handle, which is independent
// of the socket layer; listen() puts it behind an httplib server.
//
// Environment variables read by config_from_env():
//   POWERLAB_PORT              listen port (5000)
//   POWERLAB_HOST              bind address (0.0.0.0)
//   POWERLAB_DATA_DIR          directory of the result log (./powerlab-data)
//   POWERLAB_SESSION_TTL       session lifetime in seconds after the last command (86400)
//   POWERLAB_MODEL_ENDPOINT    external command-interpretation endpoint (unset: grammar only)
//   POWERLAB_CORPUS            scenario corpus loaded at start (bundled corpus)
//   POWERLAB_STARTUP_DELAY_MS  extra initialization time before listening (0)

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "powerlab/api.hpp"
#include "powerlab/model_client.hpp"
#include "powerlab/scenarios.hpp"
#include "powerlab/store.hpp"

namespace httplib {
class Server;
}

namespace powerlab::service {

struct Config {
  std::string host = "0.0.0.0";
  int port = 5000;
  std::filesystem::path data_dir = "powerlab-data";
  std::chrono::seconds session_ttl{86400};
  std::string model_endpoint;
  std::filesystem::path corpus = scenarios::default_corpus_path();
  std::chrono::milliseconds startup_delay{0};
};

/// Overrides `base` with the environment. Throws std::invalid_argument on a
/// malformed value.
Config config_from_env(Config base = {});

inline constexpr std::string_view kResultLog = "results.ndjson";

struct Response {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;
};

class Service {
 public:
  /// Loads the corpus and the result log, then waits out the configured
  /// startup delay. Throws if any of it fails.
  explicit Service(Config config, store::Clock clock = store::system_now_ms,
                   std::unique_ptr<session::ModelClient> model = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(std::string_view method, std::string_view path, std::string_view body);

  /// Binds the configured host and port; false when binding fails.
  bool bind();
  /// Binds an ephemeral port on 127.0.0.1 and returns it.
  int bind_ephemeral();
  /// Serves until stop(); requires a successful bind.
  bool serve();
  void stop();

  [[nodiscard]] const Config& config() const { return config_; }
  [[nodiscard]] std::size_t corpus_size() const { return corpus_.size(); }

 private:
  Response compute(const api::Endpoint& endpoint, std::string_view body);
  Response create_session();
  Response get_session(const std::string& id);
  Response session_command(const std::string& id, std::string_view body);
  Response get_result(const std::string& id, bool response_only);
  Response health();
  Response session_gone(const store::SessionStore::Access& access);

  Config config_;
  store::Clock clock_;
  std::unique_ptr<session::ModelClient> model_;
  std::vector<scenarios::ScenarioRecord> corpus_;
  store::ResultStore results_;
  store::SessionStore sessions_;
  std::string openapi_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace powerlab::service
