#include "powerlab/store.hpp"

#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace powerlab::store {

namespace {

using Json = nlohmann::ordered_json;

std::uint64_t splitmix(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string record_line(const StoredResult& r) {
  Json j;
  j["id"] = r.id;
  j["timestamp_ms"] = r.timestamp_ms;
  j["endpoint"] = r.endpoint;
  j["session_id"] = r.session_id ? Json(*r.session_id) : Json(nullptr);
  j["request"] = Json::parse(r.request);
  j["response"] = r.response;
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

StoredResult parse_record(const std::string& line) {
  const Json j = Json::parse(line);
  StoredResult r;
  r.id = j.at("id").get<std::string>();
  r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  r.endpoint = j.at("endpoint").get<std::string>();
  if (!j.at("session_id").is_null()) r.session_id = j["session_id"].get<std::string>();
  r.request = j.at("request").dump();
  r.response = j.at("response").get<std::string>();
  return r;
}

std::uint64_t sequence_of(const std::string& id) {
  if (id.size() < 2 || id[0] != 'r') return 0;
  try {
    return std::stoull(id.substr(1));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

std::int64_t system_now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string envelope(const StoredResult& r) {
  Json head;
  head["id"] = r.id;
  head["timestamp_ms"] = r.timestamp_ms;
  head["endpoint"] = r.endpoint;
  head["session_id"] = r.session_id ? Json(*r.session_id) : Json(nullptr);
  std::string text = head.dump();
  text.pop_back();
  return fmt::format("{},\"request\":{},\"response\":{}}}", text, r.request, r.response);
}

ResultStore::ResultStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty()) return;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::ifstream in{path_}) {
    std::string line;
    std::size_t number = 0;
    bool torn = false;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      const bool last = in.peek() == std::char_traits<char>::eof();
      try {
        StoredResult r = parse_record(line);
        next_ = std::max(next_, sequence_of(r.id) + 1);
        index_[r.id] = std::move(r);
      } catch (const std::exception& e) {
        // A crash mid-append can leave one partial line at the end.
        if (!last || !in.eof()) throw CorruptLog(fmt::format("{}:{}: {}", path_.string(), number, e.what()));
        torn = true;
      }
    }
    if (torn) {
      // Drop the partial line so new records start on a fresh line.
      std::string kept;
      std::ifstream again{path_};
      std::string l;
      for (std::size_t i = 1; std::getline(again, l) && i < number; ++i) kept += l + "\n";
      std::ofstream rewrite{path_, std::ios::trunc};
      rewrite << kept;
    }
  }
  log_.open(path_, std::ios::app);
  if (!log_) throw std::runtime_error(fmt::format("cannot open result log {}", path_.string()));
}

StoredResult ResultStore::append(std::string endpoint, std::string request, std::string response,
                                 std::optional<std::string> session_id, std::int64_t now_ms) {
  StoredResult r;
  r.timestamp_ms = now_ms;
  r.endpoint = std::move(endpoint);
  r.session_id = std::move(session_id);
  r.request = std::move(request);
  r.response = std::move(response);
  {
    std::lock_guard lock(writer_);
    r.id = fmt::format("r{:012}", next_++);
    if (log_.is_open()) {
      log_ << record_line(r) << '\n';
      log_.flush();
      if (!log_) throw std::runtime_error("result log write failed");
    }
    std::unique_lock index_lock(index_mutex_);
    index_[r.id] = r;
  }
  return r;
}

std::optional<StoredResult> ResultStore::get(const std::string& id) const {
  std::shared_lock lock(index_mutex_);
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ResultStore::size() const {
  std::shared_lock lock(index_mutex_);
  return index_.size();
}

SessionStore::SessionStore(std::chrono::seconds ttl, Clock clock)
    : ttl_ms_(std::chrono::duration_cast<std::chrono::milliseconds>(ttl).count()), clock_(std::move(clock)) {
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ static_cast<std::uint64_t>(system_now_ms());
}

std::string SessionStore::new_id() {
  std::lock_guard lock(id_mutex_);
  return fmt::format("s{:016x}", splitmix(id_state_));
}

std::shared_ptr<SessionStore::Slot> SessionStore::slot(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  auto it = slots_.find(id);
  return it == slots_.end() ? nullptr : it->second;
}

void SessionStore::sweep(std::int64_t now_ms) {
  std::shared_lock lock(map_mutex_);
  for (auto& [id, s] : slots_) {
    std::unique_lock slot_lock(s->mutex, std::try_to_lock);
    if (!slot_lock || s->expired_at) continue;
    const std::int64_t expires = s->state.updated_ms + ttl_ms_;
    if (now_ms >= expires) {
      s->expired_at = expires;
      s->state = session::SessionState{};
    }
  }
}

session::SessionState SessionStore::create() {
  const std::int64_t now = clock_();
  sweep(now);
  auto s = std::make_shared<Slot>();
  std::string id = new_id();
  s->state = session::fresh(id, now);
  session::SessionState copy = s->state;
  std::unique_lock lock(map_mutex_);
  slots_.emplace(std::move(id), std::move(s));
  return copy;
}

SessionStore::Access SessionStore::get(const std::string& id) {
  return update(id, nullptr);
}

SessionStore::Access SessionStore::update(
    const std::string& id,
    const std::function<session::SessionState(const session::SessionState&, std::int64_t)>& step) {
  Access out;
  auto s = slot(id);
  if (!s) return out;
  std::lock_guard lock(s->mutex);
  const std::int64_t now = clock_();
  if (!s->expired_at && now >= s->state.updated_ms + ttl_ms_) {
    s->expired_at = s->state.updated_ms + ttl_ms_;
    s->state = session::SessionState{};
  }
  if (s->expired_at) {
    out.status = Lookup::expired;
    out.expires_ms = *s->expired_at;
    return out;
  }
  if (step) s->state = step(s->state, now);
  out.status = Lookup::found;
  out.state = s->state;
  out.expires_ms = s->state.updated_ms + ttl_ms_;
  return out;
}

std::size_t SessionStore::live() const {
  std::shared_lock lock(map_mutex_);
  std::size_t n = 0;
  for (const auto& [id, s] : slots_) {
    std::lock_guard slot_lock(s->mutex);
    if (!s->expired_at) ++n;
  }
  return n;
}

}  // namespace powerlab::store
