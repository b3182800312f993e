#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>

#include "kgdialog/errors.hpp"
#include "kgdialog/service.hpp"
#include "test_support.hpp"

using namespace kgdialog;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

EngineConfig fixture_config(const fs::path& storage) {
  EngineConfig c;
  c.kbPath = kgtest::fixture("beverages.kb.json");
  c.lexiconPath = kgtest::fixture("lexicon.json");
  c.prefixPath = kgtest::data_file("phrases.json");
  c.storageDir = storage;
  c.indexPath = storage / "category_index.json";
  return c;
}

/// Engine + store + service listening on an ephemeral port.
struct RunningService {
  kgtest::TempDir dir;
  EngineConfig config = fixture_config(dir.path());
  Engine engine = build_engine(config, true);
  SessionStore store{config.storageDir};
  ChatService service{*engine.manager, store, config};
  int port = service.bind_to_any_port("127.0.0.1");
  std::thread thread{[this] { service.listen_after_bind(); }};

  RunningService() { service.wait_until_ready(); }
  ~RunningService() {
    service.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(std::chrono::seconds(10));
    return c;
  }
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("configuration: defaults, JSON file, environment overrides") {
  EngineConfig c = config_from_json(json::parse(
      R"({"kbPath": "kb.json", "strategy": "keyword", "seed": 4, "listenAddress": "0.0.0.0:9000"})"));
  CHECK(c.kbPath == "kb.json");
  CHECK(c.strategy == Strategy::Keyword);
  CHECK(c.seed == 4);
  CHECK(c.storageDir == "kgdialog-data");

  std::map<std::string, std::string> env = {
      {"KGDIALOG_KB", "other.json"},        {"KGDIALOG_LEXICON", "lex.json"},
      {"KGDIALOG_PREFIXES", "p.json"},      {"KGDIALOG_INDEX", "idx.json"},
      {"KGDIALOG_STRATEGY", "random"},      {"KGDIALOG_SEED", "77"},
      {"KGDIALOG_CLASSIFIER", "remote"},    {"KGDIALOG_REMOTE_ENDPOINT", "http://h:1"},
      {"KGDIALOG_STORAGE", "/tmp/store"},   {"KGDIALOG_LISTEN", "127.0.0.1:1234"}};
  apply_env_overrides(c, [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
  });
  CHECK(c.kbPath == "other.json");
  CHECK(c.lexiconPath == "lex.json");
  CHECK(c.prefixPath == "p.json");
  CHECK(c.indexPath == "idx.json");
  CHECK(c.strategy == Strategy::Random);
  CHECK(c.seed == 77);
  CHECK(c.classifierMode == ClassifierMode::Remote);
  CHECK(c.remoteEndpoint == "http://h:1");
  CHECK(c.storageDir == "/tmp/store");
  CHECK(c.listenAddress == "127.0.0.1:1234");

  auto bad = [](std::string key, std::string value) {
    EngineConfig x;
    apply_env_overrides(x, [&](const std::string& k) -> std::optional<std::string> {
      return k == key ? std::optional<std::string>(value) : std::nullopt;
    });
  };
  CHECK_THROWS_AS(bad("KGDIALOG_SEED", "12abc"), ValidationError);
  CHECK_THROWS_AS(bad("KGDIALOG_STRATEGY", "greedy"), ValidationError);
  CHECK_THROWS_AS(bad("KGDIALOG_CLASSIFIER", "magic"), ValidationError);
}

TEST_CASE("configuration validation names the field") {
  EngineConfig c;
  try {
    validate_config(c, false);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.subject() == "kbPath");
  }
  c.kbPath = kgtest::fixture("beverages.kb.json");
  c.classifierMode = ClassifierMode::Remote;
  CHECK_THROWS_AS(validate_config(c, true), ValidationError);
  c.classifierMode = ClassifierMode::Lexicon;
  c.lexiconPath = "/nonexistent.json";
  CHECK_THROWS_AS(validate_config(c, true), ValidationError);
  CHECK_NOTHROW(validate_config(c, false));
}

TEST_CASE("atomic writes leave no temp files and replace the target whole") {
  kgtest::TempDir dir;
  const fs::path target = dir.path() / "nested" / "doc.json";
  atomic_write(target, "first");
  atomic_write(target, "second");
  std::ifstream in(target);
  std::string content((std::istreambuf_iterator<char>(in)), {});
  CHECK(content == "second");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(target.parent_path())) {
    (void)e;
    ++files;
  }
  CHECK(files == 1);
}

TEST_CASE("session store: sessions, profiles, traces; crash leftovers are ignored") {
  kgtest::TempDir dir;
  SessionStore store(dir.path());
  kgtest::FixtureEngine engine;
  auto s = engine.manager->new_session("s000001", kgtest::profile("ann"), Strategy::Keyword, 3);
  const auto reply = engine.manager->step(s, "I drink tea");
  store.save_session(s);
  store.save_profile(s.profile);
  store.append_trace(s.sessionId, trace_line(s, "I drink tea", reply));
  store.append_trace(s.sessionId, trace_line(s, "again", reply));

  CHECK(store.load_session("s000001") == s);
  CHECK(store.load_profile("ann") == s.profile);
  CHECK_FALSE(store.load_session("s999999").has_value());
  CHECK_FALSE(store.load_profile("nobody").has_value());

  // A crash mid-write leaves a temp file; a crash mid-append tears the last line.
  std::ofstream(dir.path() / "sessions" / "s000002.json.tmp.123.0") << "{\"sessionId\": ";
  std::ofstream(dir.path() / "sessions" / "s000001.trace.jsonl", std::ios::app) << "{\"session\":";
  CHECK(store.session_ids() == std::vector<std::string>{"s000001"});
  const auto trace = store.read_trace("s000001");
  REQUIRE(trace.size() == 2);
  CHECK(trace[0].at("utterance") == "I drink tea");

  // Unsafe ids cannot escape the store directory.
  auto evil = s;
  evil.sessionId = "../../escape";
  store.save_session(evil);
  CHECK_FALSE(fs::exists(dir.path().parent_path().parent_path() / "escape.json"));
  CHECK(store.load_session("../../escape").has_value());
}

TEST_CASE("engine builds the index once and reloads it afterwards") {
  kgtest::TempDir dir;
  const EngineConfig config = fixture_config(dir.path());
  Engine first = build_engine(config, true);
  CHECK(first.indexBuilt);
  CHECK(fs::exists(config.indexPath));
  Engine second = build_engine(config, true);
  CHECK_FALSE(second.indexBuilt);
  CHECK(*second.index == *first.index);
  CHECK(second.tree->at("Hobby").categories == std::set<std::string>{"/Hobbies & Leisure"});

  EngineConfig keyword_only = config;
  keyword_only.strategy = Strategy::Keyword;
  Engine lean = build_engine(keyword_only, false);
  CHECK(lean.index == nullptr);
  CHECK_FALSE(lean.manager->supports(Strategy::KeywordCategory));

  std::ofstream(config.indexPath) << "{broken";
  CHECK_THROWS_AS(build_engine(config, true), ParseError);
}

TEST_CASE("service handlers: create, message, history, rating") {
  kgtest::TempDir dir;
  const EngineConfig config = fixture_config(dir.path());
  Engine engine = build_engine(config, true);
  SessionStore store(config.storageDir);
  ChatService service(*engine.manager, store, config);

  auto created = service.create_session({{"userId", "ann"}, {"culture", "EN"}, {"seed", 5}});
  REQUIRE(created.status == 200);
  const std::string id = created.body.at("sessionId");
  CHECK(id == "s000001");
  CHECK(created.body.at("strategy") == "keyword-category");

  auto r = service.post_message(id, {{"text", "I love scones with jam"}});
  REQUIRE(r.status == 200);
  CHECK(r.body.at("topic") == "Scones");
  CHECK(r.body.at("selectionPath") == "category-jump");
  CHECK(r.body.at("turn") == 1);

  CHECK(service.put_rating(id, {{"turn", 1}, {"score", 6}}).status == 200);
  CHECK(service.put_rating(id, {{"turn", 2}, {"score", 6}}).status == 400);
  CHECK(service.put_rating(id, {{"turn", 1}, {"score", 8}}).status == 400);
  CHECK(service.put_rating(id, {{"turn", "x"}}).status == 400);

  const auto h = service.history(id);
  REQUIRE(h.status == 200);
  REQUIRE(h.body.at("exchanges").size() == 1);
  CHECK(h.body.at("exchanges")[0].at("user") == "I love scones with jam");
  CHECK(h.body.at("exchanges")[0].at("rating") == 6);

  CHECK(service.post_message("s424242", {{"text", "hi"}}).status == 404);
  CHECK(service.history("s424242").status == 404);
  CHECK(service.post_message(id, {{"txt", "hi"}}).status == 400);
  CHECK(service.create_session({{"strategy", "greedy"}}).status == 400);
  CHECK(service.create_session(json::array()).status == 400);
  CHECK(store.read_trace(id).size() == 1);
}

TEST_CASE("service resumes sessions from the store and continues numbering") {
  kgtest::TempDir dir;
  const EngineConfig config = fixture_config(dir.path());
  Engine engine = build_engine(config, true);
  std::string id;
  std::vector<std::string> uninterrupted;
  {
    SessionStore store(config.storageDir);
    ChatService service(*engine.manager, store, config);
    id = service.create_session({{"seed", 8}}).body.at("sessionId");
    service.post_message(id, {{"text", "I drink green tea every morning"}});
  }
  {
    SessionStore store(config.storageDir);
    ChatService service(*engine.manager, store, config);
    const auto r = service.post_message(id, {{"text", "tell me more"}});
    CHECK(r.status == 200);
    CHECK(r.body.at("turn") == 2);
    CHECK(service.create_session(json::object()).body.at("sessionId") == "s000002");
    uninterrupted.push_back(r.body.at("text"));
  }
  // The same two turns in one process give the same second reply.
  kgtest::TempDir other;
  const EngineConfig config2 = fixture_config(other.path());
  SessionStore store(config2.storageDir);
  ChatService service(*engine.manager, store, config2);
  const std::string id2 = service.create_session({{"seed", 8}}).body.at("sessionId");
  service.post_message(id2, {{"text", "I drink green tea every morning"}});
  CHECK(service.post_message(id2, {{"text", "tell me more"}}).body.at("text") ==
        uninterrupted.front());
}

TEST_CASE("profiles persist across sessions of the same user") {
  kgtest::TempDir dir;
  const EngineConfig config = fixture_config(dir.path());
  Engine engine = build_engine(config, true);
  SessionStore store(config.storageDir);
  ChatService service(*engine.manager, store, config);
  const std::string id =
      service.create_session({{"userId", "bob"}, {"strategy", "keyword"}}).body.at("sessionId");
  service.post_message(id, {{"text", "I drink tea"}});  // asks a yes/no question about Tea
  service.post_message(id, {{"text", "no never"}});
  const auto profile = store.load_profile("bob");
  REQUIRE(profile.has_value());
  CHECK(profile->likelinessOverrides.contains("Tea"));
}

TEST_CASE("HTTP API end to end") {
  RunningService svc;
  auto client = svc.client();
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  auto created = client.Post("/session", R"({"userId": "ann", "seed": 3})", "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 200);
  const std::string id = body_of(created).at("sessionId");

  auto msg = client.Post("/session/" + id + "/message",
                         R"({"text": "My bank account has a high interest"})", "application/json");
  REQUIRE(msg);
  REQUIRE(msg->status == 200);
  CHECK(body_of(msg).at("topic") != "Hobby");

  auto rating = client.Put("/session/" + id + "/rating", R"({"turn": 1, "score": 5})",
                           "application/json");
  REQUIRE(rating);
  CHECK(rating->status == 200);

  auto history = client.Get("/session/" + id + "/history");
  REQUIRE(history);
  CHECK(body_of(history).at("exchanges")[0].at("rating") == 5);

  auto missing = client.Post("/session/nope/message", R"({"text": "hi"})", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto bad_json = client.Post("/session", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  auto unknown = client.Get("/nowhere");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
}

TEST_CASE("HTTP sessions are deterministic for a fixed seed") {
  const std::vector<std::string> script = {"hello", "I drink green tea every morning", "yes",
                                           "My bank account has a high interest", "tell me more"};
  auto run = [&] {
    RunningService svc;
    auto client = svc.client();
    const std::string id =
        body_of(client.Post("/session", R"({"seed": 21})", "application/json")).at("sessionId");
    std::string out;
    for (const auto& line : script) {
      out += client.Post("/session/" + id + "/message", json{{"text", line}}.dump(),
                         "application/json")
                 ->body;
    }
    return out;
  };
  const std::string first = run();
  CHECK(run() == first);
}

TEST_CASE("concurrent sessions are served in parallel without interference") {
  RunningService svc;
  std::vector<std::string> ids;
  {
    auto client = svc.client();
    for (int i = 0; i < 4; ++i) {
      ids.push_back(
          body_of(client.Post("/session", R"({"seed": 1})", "application/json")).at("sessionId"));
    }
  }
  std::vector<std::string> outputs(ids.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    threads.emplace_back([&, i] {
      auto client = svc.client();
      for (const char* line : {"hello", "I drink tea", "tell me more"}) {
        auto r = client.Post("/session/" + ids[i] + "/message", json{{"text", line}}.dump(),
                             "application/json");
        outputs[i] += r ? r->body : "ERROR";
      }
    });
  }
  for (auto& t : threads) t.join();
  // Same seed and script: every session produced the same replies.
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    CHECK(outputs[i].find("ERROR") == std::string::npos);
    CHECK(outputs[i] == outputs[0]);
  }
  for (const auto& id : ids) CHECK(svc.store.read_trace(id).size() == 3);
}

namespace {

class SlowClassifier final : public Classifier {
 public:
  explicit SlowClassifier(std::shared_ptr<Classifier> inner) : inner_(std::move(inner)) {}
  ClassificationResult classify(std::string_view text) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(400));
    return inner_->classify(text);
  }

 private:
  std::shared_ptr<Classifier> inner_;
};

}  // namespace

TEST_CASE("a second message for a busy session is rejected with 409 and Retry-After") {
  kgtest::FixtureEngine fixture;
  DialogueManager::Assets assets = fixture.manager->assets();
  assets.classifier = std::make_shared<SlowClassifier>(assets.classifier);
  DialogueManager slow(assets);
  kgtest::TempDir dir;
  const EngineConfig config = fixture_config(dir.path());
  SessionStore store(config.storageDir);
  ChatService service(slow, store, config);
  const int port = service.bind_to_any_port("127.0.0.1");
  std::thread server([&] { service.listen_after_bind(); });
  service.wait_until_ready();

  const std::string id = service.create_session(json::object()).body.at("sessionId");
  const std::string path = "/session/" + id + "/message";
  int first_status = 0;
  std::thread first([&] {
    httplib::Client c("127.0.0.1", port);
    auto r = c.Post(path, R"({"text": "I drink tea"})", "application/json");
    first_status = r ? r->status : -1;
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(150));
  httplib::Client c("127.0.0.1", port);
  auto second = c.Post(path, R"({"text": "hello"})", "application/json");
  first.join();
  REQUIRE(second);
  CHECK(first_status == 200);
  CHECK(second->status == 409);
  CHECK(second->get_header_value("Retry-After") == "1");
  // The rejected message left no trace; a retry succeeds.
  CHECK(store.read_trace(id).size() == 1);
  auto retry = c.Post(path, R"({"text": "hello"})", "application/json");
  REQUIRE(retry);
  CHECK(retry->status == 200);
  CHECK(json::parse(retry->body).at("turn") == 2);
  service.stop();
  server.join();
}
