#pragma once

// Free text -> Command boundary. An external model may propose a structured
// command as JSON ({"verb": ..., "args": {...}}); whenever that fails the
// text is parsed with the command grammar instead and a notice is recorded.

#include <chrono>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "powerlab/command.hpp"

namespace powerlab::session {

struct Interpretation {
  Command command;
  bool fell_back = false;
  std::vector<std::string> diagnostics;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  /// Throws ParseError only when the grammar fallback fails as well.
  virtual Interpretation interpret(std::string_view text) = 0;
};

/// Grammar only.
class StubClient final : public ModelClient {
 public:
  Interpretation interpret(std::string_view text) override;
};

/// Replays canned model responses keyed by input text.
class FixtureClient final : public ModelClient {
 public:
  explicit FixtureClient(std::map<std::string, std::string, std::less<>> responses);
  Interpretation interpret(std::string_view text) override;

 private:
  std::map<std::string, std::string, std::less<>> responses_;
};

/// POSTs {"text": ...} to an endpoint such as http://host:port/interpret and
/// expects the command JSON back.
class HttpClient final : public ModelClient {
 public:
  HttpClient(std::string endpoint, std::chrono::milliseconds timeout);
  Interpretation interpret(std::string_view text) override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

/// Converts a model's JSON command. Throws std::invalid_argument.
Command command_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json command_to_json(const Command& cmd);

/// Model response text in, Command out, grammar fallback on any failure.
Interpretation interpret_response(std::string_view text, std::string_view response);

/// HttpClient when `endpoint` is non-empty, StubClient otherwise.
std::unique_ptr<ModelClient> make_client(const std::string& endpoint);

}  // namespace powerlab::session
