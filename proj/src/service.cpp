#include "kgdialog/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "kgdialog/errors.hpp"

namespace kgdialog {

using nlohmann::json;
namespace fs = std::filesystem;

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

namespace {

Strategy strategy_or_throw(const std::string& name) {
  auto s = parse_strategy(name);
  if (!s) throw ValidationError("strategy", "unknown strategy '" + name + "'");
  return *s;
}

ClassifierMode mode_or_throw(const std::string& name) {
  if (name == "lexicon") return ClassifierMode::Lexicon;
  if (name == "remote") return ClassifierMode::Remote;
  throw ValidationError("classifier", "unknown classifier mode '" + name + "'");
}

std::uint64_t seed_or_throw(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used, 0);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("seed", "seed '" + text + "' is not a 64-bit integer");
  }
}

}  // namespace

void apply_env_overrides(EngineConfig& config, const EnvLookup& env) {
  if (auto v = env("KGDIALOG_KB")) config.kbPath = *v;
  if (auto v = env("KGDIALOG_LEXICON")) config.lexiconPath = *v;
  if (auto v = env("KGDIALOG_PREFIXES")) config.prefixPath = *v;
  if (auto v = env("KGDIALOG_INDEX")) config.indexPath = *v;
  if (auto v = env("KGDIALOG_STRATEGY")) config.strategy = strategy_or_throw(*v);
  if (auto v = env("KGDIALOG_SEED")) config.seed = seed_or_throw(*v);
  if (auto v = env("KGDIALOG_CLASSIFIER")) config.classifierMode = mode_or_throw(*v);
  if (auto v = env("KGDIALOG_REMOTE_ENDPOINT")) config.remoteEndpoint = *v;
  if (auto v = env("KGDIALOG_STORAGE")) config.storageDir = *v;
  if (auto v = env("KGDIALOG_LISTEN")) config.listenAddress = *v;
}

EngineConfig config_from_json(const json& doc) {
  EngineConfig c;
  try {
    if (doc.contains("kbPath")) c.kbPath = doc.at("kbPath").get<std::string>();
    if (doc.contains("lexiconPath")) c.lexiconPath = doc.at("lexiconPath").get<std::string>();
    if (doc.contains("prefixPath")) c.prefixPath = doc.at("prefixPath").get<std::string>();
    if (doc.contains("indexPath")) c.indexPath = doc.at("indexPath").get<std::string>();
    if (doc.contains("strategy")) c.strategy = strategy_or_throw(doc.at("strategy"));
    if (doc.contains("seed")) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("classifier")) c.classifierMode = mode_or_throw(doc.at("classifier"));
    c.remoteEndpoint = doc.value("remoteEndpoint", c.remoteEndpoint);
    if (doc.contains("storageDir")) c.storageDir = doc.at("storageDir").get<std::string>();
    c.listenAddress = doc.value("listenAddress", c.listenAddress);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  return c;
}

void validate_config(const EngineConfig& config, bool need_lexicon) {
  auto must_exist = [](const fs::path& p, const char* field) {
    if (p.empty()) throw ValidationError(field, std::string(field) + " is not set");
    if (!fs::exists(p)) {
      throw ValidationError(field, std::string(field) + " '" + p.string() + "' does not exist");
    }
  };
  must_exist(config.kbPath, "kbPath");
  if (!config.prefixPath.empty()) must_exist(config.prefixPath, "prefixPath");
  if (need_lexicon && config.classifierMode == ClassifierMode::Lexicon) {
    must_exist(config.lexiconPath, "lexiconPath");
  }
  if (config.classifierMode == ClassifierMode::Remote && config.remoteEndpoint.empty()) {
    throw ValidationError("remoteEndpoint", "remote classifier mode needs remoteEndpoint");
  }
}

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                       std::to_string(counter.fetch_add(1));
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("cannot write '" + tmp.string() + "'");
  std::size_t written = 0;
  while (written < content.size()) {
    const auto n = ::write(fd, content.data() + written, content.size() - written);
    if (n <= 0) {
      ::close(fd);
      fs::remove(tmp);
      throw Error("short write to '" + tmp.string() + "'");
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp, path);
}

namespace {

std::string safe_name(const std::string& id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? std::string(1, c) : "%" + std::to_string(static_cast<unsigned char>(c));
  }
  if (out.empty() || out.front() == '.') out = "_" + out;
  return out;
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("corrupt document '" + path.string() + "': " + e.what());
  }
}

}  // namespace

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_ / "sessions");
  fs::create_directories(dir_ / "profiles");
}

fs::path SessionStore::session_path(const std::string& id) const {
  return dir_ / "sessions" / (safe_name(id) + ".json");
}

fs::path SessionStore::profile_path(const std::string& id) const {
  return dir_ / "profiles" / (safe_name(id) + ".json");
}

void SessionStore::save_session(const SessionState& session) {
  atomic_write(session_path(session.sessionId), session_to_json(session).dump(2));
}

std::optional<SessionState> SessionStore::load_session(const std::string& session_id) const {
  auto doc = read_json(session_path(session_id));
  if (!doc) return std::nullopt;
  return session_from_json(*doc);
}

std::vector<std::string> SessionStore::session_ids() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir_ / "sessions")) {
    const auto name = entry.path().filename().string();
    // Leftover temp files from an interrupted write are not sessions.
    if (name.ends_with(".json") && name.find(".tmp.") == std::string::npos &&
        !name.ends_with(".trace.jsonl")) {
      if (auto doc = read_json(entry.path())) ids.push_back(doc->at("sessionId").get<std::string>());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SessionStore::save_profile(const PersonProfile& profile) {
  atomic_write(profile_path(profile.userId), profile_to_json(profile).dump(2));
}

std::optional<PersonProfile> SessionStore::load_profile(const std::string& user_id) const {
  auto doc = read_json(profile_path(user_id));
  if (!doc) return std::nullopt;
  return profile_from_json(*doc);
}

void SessionStore::append_trace(const std::string& session_id, const json& line) {
  std::ofstream out(dir_ / "sessions" / (safe_name(session_id) + ".trace.jsonl"), std::ios::app);
  out << line.dump() << '\n';
}

std::vector<json> SessionStore::read_trace(const std::string& session_id) const {
  std::vector<json> lines;
  std::ifstream in(dir_ / "sessions" / (safe_name(session_id) + ".trace.jsonl"));
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      break;  // torn final line from a crash mid-append
    }
  }
  return lines;
}

Engine build_engine(const EngineConfig& config, bool want_index) {
  const bool need_index = want_index || config.strategy == Strategy::KeywordCategory;
  validate_config(config, need_index);

  Engine engine;
  engine.kb = std::make_shared<const KnowledgeBase>(load_kb(config.kbPath));
  engine.tree = std::make_shared<DialogueTree>(build_tree(*engine.kb));

  if (need_index) {
    if (config.classifierMode == ClassifierMode::Lexicon) {
      engine.classifier = std::make_shared<LexiconClassifier>(load_lexicon(config.lexiconPath));
    } else {
      engine.classifier = std::make_shared<RemoteClassifier>(config.remoteEndpoint);
    }
    CategoryIndex index;
    if (!config.indexPath.empty() && fs::exists(config.indexPath)) {
      std::ifstream in(config.indexPath);
      try {
        index = index_from_json(json::parse(in));
      } catch (const json::parse_error& e) {
        throw ParseError("corrupt category index '" + config.indexPath.string() + "': " + e.what());
      }
    } else {
      index = build_category_index(*engine.tree, *engine.classifier);
      engine.indexBuilt = true;
      if (!config.indexPath.empty()) atomic_write(config.indexPath, index_to_json(index).dump(2));
    }
    attach_categories(*engine.tree, index);
    engine.index = std::make_shared<const CategoryIndex>(std::move(index));
  }

  DialogueManager::Assets assets;
  assets.tree = engine.tree;
  assets.index = engine.index;
  assets.classifier = engine.classifier;
  assets.phrases =
      config.prefixPath.empty() ? default_phrasebook() : load_phrasebook(config.prefixPath);
  if (!assets.phrases.commands.empty()) {
    assets.commands = std::make_shared<PhraseCommandDetector>(assets.phrases.commands);
  }
  engine.manager = std::make_unique<DialogueManager>(std::move(assets));
  return engine;
}

json reply_to_json(const Reply& reply, int turn) {
  json out = {{"text", reply.text},
              {"topic", reply.topicId},
              {"selectionPath", to_string(reply.selectionPath)},
              {"kind", reply.sentenceKind ? json(to_string(*reply.sentenceKind)) : json(nullptr)},
              {"turn", turn},
              {"reused", reply.reused}};
  if (reply.activity) out["activity"] = *reply.activity;
  return out;
}

json history_to_json(const SessionState& session) {
  json exchanges = json::array();
  int turn = 0;
  for (std::size_t i = 0; i + 1 < session.history.size(); i += 2) {
    const auto& user = session.history[i];
    const auto& system = session.history[i + 1];
    ++turn;
    auto rating = session.ratings.find(turn);
    exchanges.push_back(
        {{"turn", turn},
         {"user", user.text},
         {"system", system.text},
         {"topic", system.topicId},
         {"selectionPath", system.path ? json(to_string(*system.path)) : json(nullptr)},
         {"kind", system.kind ? json(to_string(*system.kind)) : json(nullptr)},
         {"rating", rating == session.ratings.end() ? json(nullptr) : json(rating->second)}});
  }
  return {{"sessionId", session.sessionId},
          {"userId", session.profile.userId},
          {"strategy", to_string(session.strategy)},
          {"turnCount", session.turnCount},
          {"exchanges", exchanges}};
}

ChatService::ChatService(const DialogueManager& manager, SessionStore& store,
                         EngineConfig defaults)
    : manager_(manager), store_(store), defaults_(std::move(defaults)),
      server_(std::make_unique<httplib::Server>()) {
  for (const auto& id : store_.session_ids()) {
    if (id.size() > 1 && id.front() == 's') {
      try {
        next_session_ = std::max(next_session_, std::stoul(id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
  install_routes();
}

ChatService::~ChatService() { stop(); }

std::shared_ptr<ChatService::Slot> ChatService::slot_for(const std::string& session_id) {
  std::lock_guard lock(sessions_mutex_);
  if (auto it = sessions_.find(session_id); it != sessions_.end()) return it->second;
  auto loaded = store_.load_session(session_id);
  if (!loaded) return nullptr;
  auto slot = std::make_shared<Slot>();
  slot->state = std::move(loaded);
  sessions_.emplace(session_id, slot);
  return slot;
}

namespace {

ChatService::Response error_response(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

}  // namespace

ChatService::Response ChatService::create_session(const json& request) {
  if (!request.is_object()) return error_response(400, "request body must be a JSON object");
  Strategy strategy = defaults_.strategy;
  std::uint64_t seed = defaults_.seed;
  std::string user_id;
  std::string culture;
  try {
    user_id = request.value("userId", std::string("anonymous"));
    culture = request.value("culture", std::string());
    if (request.contains("strategy")) {
      auto s = parse_strategy(request.at("strategy").get<std::string>());
      if (!s) return error_response(400, "unknown strategy");
      strategy = *s;
    }
    if (request.contains("seed")) seed = request.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  }
  if (!manager_.supports(strategy)) {
    return error_response(400, "strategy keyword-category is not available on this server");
  }

  PersonProfile profile = store_.load_profile(user_id).value_or(PersonProfile{});
  profile.userId = user_id;
  if (!culture.empty()) profile.culture = culture;

  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    std::ostringstream name;
    name << 's' << std::setw(6) << std::setfill('0') << next_session_++;
    id = name.str();
  }
  auto slot = std::make_shared<Slot>();
  slot->state = manager_.new_session(id, std::move(profile), strategy, seed);
  store_.save_session(*slot->state);
  store_.save_profile(slot->state->profile);
  {
    std::lock_guard lock(sessions_mutex_);
    sessions_.emplace(id, slot);
  }
  return {200, {{"sessionId", id}, {"strategy", to_string(strategy)}, {"seed", seed}}};
}

ChatService::Response ChatService::post_message(const std::string& session_id,
                                                const json& request) {
  auto slot = slot_for(session_id);
  if (!slot) return error_response(404, "unknown session '" + session_id + "'");
  std::string text;
  try {
    text = request.at("text").get<std::string>();
  } catch (const json::exception&) {
    return error_response(400, "body must be {\"text\": string}");
  }
  std::unique_lock lock(slot->busy, std::try_to_lock);
  if (!lock.owns_lock()) return {409, {{"error", "session busy"}, {"retry", true}}};

  // Step a copy and commit it only once it is on disk, so a failed turn
  // leaves both the cached and the stored session untouched.
  SessionState session = *slot->state;
  // The profile may have been updated by another session of the same user.
  if (auto stored = store_.load_profile(session.profile.userId)) session.profile = *stored;
  const Reply reply = manager_.step(session, text);
  store_.save_session(session);
  store_.save_profile(session.profile);
  store_.append_trace(session.sessionId, trace_line(session, text, reply));
  slot->state = std::move(session);
  return {200, reply_to_json(reply, slot->state->turnCount)};
}

ChatService::Response ChatService::history(const std::string& session_id) {
  auto slot = slot_for(session_id);
  if (!slot) return error_response(404, "unknown session '" + session_id + "'");
  std::lock_guard lock(slot->busy);
  return {200, history_to_json(*slot->state)};
}

ChatService::Response ChatService::put_rating(const std::string& session_id,
                                              const json& request) {
  auto slot = slot_for(session_id);
  if (!slot) return error_response(404, "unknown session '" + session_id + "'");
  int turn = 0;
  int score = 0;
  try {
    turn = request.at("turn").get<int>();
    score = request.at("score").get<int>();
  } catch (const json::exception&) {
    return error_response(400, "body must be {\"turn\": int, \"score\": int}");
  }
  if (score < 1 || score > 7) return error_response(400, "score must be within 1..7");
  std::lock_guard lock(slot->busy);
  SessionState& session = *slot->state;
  if (turn < 1 || turn > session.turnCount) {
    return error_response(400, "turn " + std::to_string(turn) + " has not happened");
  }
  session.ratings[turn] = score;
  store_.save_session(session);
  return {200, {{"turn", turn}, {"score", score}}};
}

void ChatService::install_routes() {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    if (r.status == 409) res.set_header("Retry-After", "1");
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req) -> std::optional<json> {
    if (req.body.empty()) return json::object();
    try {
      return json::parse(req.body);
    } catch (const json::parse_error&) {
      return std::nullopt;
    }
  };
  auto& srv = *server_;
  srv.Get("/healthz", [send](const httplib::Request&, httplib::Response& res) {
    send(res, {200, {{"status", "ok"}}});
  });
  srv.Post("/session", [this, send, parse_body](const httplib::Request& req,
                                                httplib::Response& res) {
    auto body = parse_body(req);
    send(res, body ? create_session(*body) : error_response(400, "invalid JSON"));
  });
  srv.Post(R"(/session/([^/]+)/message)",
           [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
             auto body = parse_body(req);
             send(res, body ? post_message(req.matches[1], *body)
                            : error_response(400, "invalid JSON"));
           });
  srv.Get(R"(/session/([^/]+)/history)",
          [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, history(req.matches[1]));
          });
  srv.Put(R"(/session/([^/]+)/rating)",
          [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req);
            send(res, body ? put_rating(req.matches[1], *body)
                           : error_response(400, "invalid JSON"));
          });
  srv.set_exception_handler(
      [send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          message = e.what();
        } catch (...) {
        }
        send(res, error_response(500, message));
      });
}

bool ChatService::listen(const std::string& host, int port) { return server_->listen(host, port); }

int ChatService::bind_to_any_port(const std::string& host) {
  return server_->bind_to_any_port(host);
}

bool ChatService::listen_after_bind() { return server_->listen_after_bind(); }

void ChatService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void ChatService::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace kgdialog
