#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdialog/dialogue_manager.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "kgdialog/topic_matching.hpp"

namespace httplib {
class Server;
}

namespace kgdialog {

enum class ClassifierMode { Lexicon, Remote };

struct EngineConfig {
  std::filesystem::path kbPath;
  std::filesystem::path lexiconPath;
  std::filesystem::path prefixPath;  ///< phrasebook: prefixes and answer lexicons
  /// Category index file; built and written on first use when missing.
  std::filesystem::path indexPath;
  Strategy strategy = Strategy::KeywordCategory;
  std::uint64_t seed = 1;
  ClassifierMode classifierMode = ClassifierMode::Lexicon;
  std::string remoteEndpoint;
  std::filesystem::path storageDir = "kgdialog-data";
  std::string listenAddress = "127.0.0.1:8080";
};

/// Every field may be overridden by KGDIALOG_<FIELD> (KB, LEXICON, PREFIXES,
/// INDEX, STRATEGY, SEED, CLASSIFIER, REMOTE_ENDPOINT, STORAGE, LISTEN).
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();
void apply_env_overrides(EngineConfig& config, const EnvLookup& env);

EngineConfig config_from_json(const nlohmann::json& doc);
/// Throws ValidationError naming the offending field.
void validate_config(const EngineConfig& config, bool need_lexicon);

/// Writes to a sibling temp file, flushes it to disk, then renames over the
/// target, so readers see either the old or the new document.
void atomic_write(const std::filesystem::path& path, const std::string& content);

/// File-per-document JSON persistence: sessions/<id>.json, profiles/<user>.json,
/// plus an append-only sessions/<id>.trace.jsonl decision log.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void save_session(const SessionState& session);
  std::optional<SessionState> load_session(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  void save_profile(const PersonProfile& profile);
  std::optional<PersonProfile> load_profile(const std::string& user_id) const;
  void append_trace(const std::string& session_id, const nlohmann::json& line);
  std::vector<nlohmann::json> read_trace(const std::string& session_id) const;

 private:
  std::filesystem::path session_path(const std::string& id) const;
  std::filesystem::path profile_path(const std::string& id) const;

  std::filesystem::path dir_;
};

/// Everything a conversation needs, loaded once and shared read-only.
struct Engine {
  std::shared_ptr<const KnowledgeBase> kb;
  std::shared_ptr<DialogueTree> tree;
  std::shared_ptr<const CategoryIndex> index;
  std::shared_ptr<Classifier> classifier;
  std::unique_ptr<DialogueManager> manager;
  bool indexBuilt = false;  ///< true when the index was computed rather than loaded
};

/// Loads the KB and phrasebook, sets up the classifier and, when the default
/// strategy or `want_index` asks for it, loads or builds the category index.
Engine build_engine(const EngineConfig& config, bool want_index);

/// HTTP+JSON session API over a DialogueManager and a SessionStore.
///   POST /session                 {"userId","culture","strategy","seed"} -> {"sessionId"}
///   POST /session/{id}/message    {"text"} -> reply
///   GET  /session/{id}/history
///   PUT  /session/{id}/rating     {"turn","score"}
///   GET  /healthz
/// A message for a session that is already processing one is rejected with
/// 409 and a Retry-After header; the client resends.
class ChatService {
 public:
  ChatService(const DialogueManager& manager, SessionStore& store, EngineConfig defaults);
  ~ChatService();
  ChatService(const ChatService&) = delete;
  ChatService& operator=(const ChatService&) = delete;

  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

  /// Handler bodies, callable without HTTP for tests.
  struct Response {
    int status = 200;
    nlohmann::json body;
  };
  Response create_session(const nlohmann::json& request);
  Response post_message(const std::string& session_id, const nlohmann::json& request);
  Response history(const std::string& session_id);
  Response put_rating(const std::string& session_id, const nlohmann::json& request);

 private:
  struct Slot {
    std::mutex busy;
    std::optional<SessionState> state;
  };
  std::shared_ptr<Slot> slot_for(const std::string& session_id);
  void install_routes();

  const DialogueManager& manager_;
  SessionStore& store_;
  EngineConfig defaults_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::size_t next_session_ = 1;
  std::unique_ptr<httplib::Server> server_;
};

nlohmann::json reply_to_json(const Reply& reply, int turn);
nlohmann::json history_to_json(const SessionState& session);

}  // namespace kgdialog
