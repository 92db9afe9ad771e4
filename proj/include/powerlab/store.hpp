#pragma once

// Two storage tiers. ResultStore is the long-term layer: an append-only
// newline-delimited JSON log with an in-memory index, rebuilt on start.
// SessionStore is the short-term layer: sessions in memory, dropped after a
// period of inactivity.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "powerlab/session.hpp"

namespace powerlab::store {

using Clock = std::function<std::int64_t()>;  // milliseconds since the epoch

std::int64_t system_now_ms();

struct StoredResult {
  std::string id;
  std::int64_t timestamp_ms = 0;
  std::string endpoint;
  std::optional<std::string> session_id;
  std::string request;   // compact JSON
  std::string response;  // bytes originally sent

  friend bool operator==(const StoredResult&, const StoredResult&) = default;
};

/// JSON envelope served by GET /results/{id}; the response bytes are
/// embedded verbatim.
std::string envelope(const StoredResult& r);

class CorruptLog : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ResultStore {
 public:
  /// Opens (or creates) the log at `path` and indexes every record. An
  /// empty path keeps results in memory only. Throws CorruptLog on a
  /// malformed record other than a torn final line.
  explicit ResultStore(std::filesystem::path path = {});

  StoredResult append(std::string endpoint, std::string request, std::string response,
                      std::optional<std::string> session_id, std::int64_t now_ms);
  [[nodiscard]] std::optional<StoredResult> get(const std::string& id) const;
  [[nodiscard]] std::size_t size() const;

 private:
  std::filesystem::path path_;
  std::ofstream log_;
  std::mutex writer_;  // serializes id allocation and log appends
  mutable std::shared_mutex index_mutex_;
  std::unordered_map<std::string, StoredResult> index_;
  std::uint64_t next_ = 1;
};

enum class Lookup { found, missing, expired };

class SessionStore {
 public:
  SessionStore(std::chrono::seconds ttl, Clock clock);

  session::SessionState create();

  struct Access {
    Lookup status = Lookup::missing;
    session::SessionState state;
    std::int64_t expires_ms = 0;  // expiry time, also for expired sessions
  };

  Access get(const std::string& id);

  /// Runs `step` on the session under its own lock and stores the new
  /// state. Other sessions are not blocked.
  Access update(const std::string& id,
                const std::function<session::SessionState(const session::SessionState&, std::int64_t now_ms)>& step);

  [[nodiscard]] std::size_t live() const;
  [[nodiscard]] std::int64_t ttl_ms() const { return ttl_ms_; }

 private:
  struct Slot {
    std::mutex mutex;
    session::SessionState state;
    std::optional<std::int64_t> expired_at;
  };
  std::shared_ptr<Slot> slot(const std::string& id) const;
  std::string new_id();
  void sweep(std::int64_t now_ms);

  std::int64_t ttl_ms_;
  Clock clock_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::mutex id_mutex_;
  std::uint64_t id_state_;
};

}  // namespace powerlab::store
