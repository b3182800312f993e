// kgdialog: compile knowledge bases, build category indexes, chat, serve the
// session API and run the evaluation statistics.

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kgdialog/benchmark.hpp"
#include "kgdialog/dialogue_tree.hpp"
#include "kgdialog/errors.hpp"
#include "kgdialog/eval_stats.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "kgdialog/service.hpp"

namespace {

using namespace kgdialog;
using nlohmann::json;

struct EngineFlags {
  std::string config;
  std::string kb;
  std::string lexicon;
  std::string phrases;
  std::string index;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::string classifier;
  std::string endpoint;
  std::string storage;
  std::string listen;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON engine configuration file");
    cmd->add_option("--kb", kb, "Knowledge base JSON");
    cmd->add_option("--lexicon", lexicon, "Category lexicon JSON");
    cmd->add_option("--phrases", phrases, "Prefix and answer phrasebook JSON");
    cmd->add_option("--index", index, "Category index file (built when missing)");
    cmd->add_option("--classifier", classifier, "lexicon | remote");
    cmd->add_option("--endpoint", endpoint, "Remote classifier base URL");
    cmd->add_option("--storage", storage, "Session storage directory");
  }

  // defaults < config file < environment < flags
  EngineConfig resolve() const {
    EngineConfig c;
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw ParseError("cannot open config '" + config + "'");
      try {
        c = config_from_json(json::parse(in));
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed config: ") + e.what());
      }
    }
    apply_env_overrides(c, process_env());
    if (!kb.empty()) c.kbPath = kb;
    if (!lexicon.empty()) c.lexiconPath = lexicon;
    if (!phrases.empty()) c.prefixPath = phrases;
    if (!index.empty()) c.indexPath = index;
    if (!strategy.empty()) {
      auto s = parse_strategy(strategy);
      if (!s) throw ValidationError("strategy", "unknown strategy '" + strategy + "'");
      c.strategy = *s;
    }
    if (seed) c.seed = *seed;
    if (!classifier.empty()) {
      if (classifier != "lexicon" && classifier != "remote") {
        throw ValidationError("classifier", "unknown classifier mode '" + classifier + "'");
      }
      c.classifierMode = classifier == "remote" ? ClassifierMode::Remote : ClassifierMode::Lexicon;
    }
    if (!endpoint.empty()) c.remoteEndpoint = endpoint;
    if (!storage.empty()) c.storageDir = storage;
    if (!listen.empty()) c.listenAddress = listen;
    if (c.indexPath.empty()) c.indexPath = c.storageDir / "category_index.json";
    return c;
  }
};

void print_stats(const TreeStats& s, std::ostream& out) {
  out << "topics      " << s.topicCount << '\n'
      << "sentences   " << s.sentenceCount << '\n'
      << "max depth   " << s.maxDepth << '\n';
  for (const auto& [kind, n] : s.sentencesPerKind) {
    out << "  " << std::left << std::setw(20) << to_string(kind) << n << '\n';
  }
}

int cmd_compile(const std::string& kb_path, const std::string& dump_path) {
  std::ifstream in(kb_path);
  if (!in) {
    std::cerr << "error: cannot open '" << kb_path << "'\n";
    return 1;
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  }
  try {
    const KnowledgeBase kb = kb_from_json(doc);
    const DialogueTree tree = build_tree(kb);
    print_stats(tree.stats(), std::cout);
    if (!dump_path.empty()) atomic_write(dump_path, tree_to_json(tree).dump(2) + "\n");
  } catch (const ValidationError& e) {
    std::cerr << "validation error in '" << e.subject() << "':\n" << e.what();
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int cmd_index(const EngineFlags& flags, const std::string& out_path) {
  EngineConfig c = flags.resolve();
  if (!out_path.empty()) c.indexPath = out_path;
  validate_config(c, true);
  const KnowledgeBase kb = load_kb(c.kbPath);
  const DialogueTree tree = build_tree(kb);
  std::unique_ptr<Classifier> classifier;
  if (c.classifierMode == ClassifierMode::Lexicon) {
    classifier = std::make_unique<LexiconClassifier>(load_lexicon(c.lexiconPath));
  } else {
    classifier = std::make_unique<RemoteClassifier>(c.remoteEndpoint);
  }
  const CategoryIndex index = build_category_index(tree, *classifier);
  atomic_write(c.indexPath, index_to_json(index).dump(2) + "\n");
  std::cout << "categorized   " << index.categorized_count() << '\n'
            << "uncategorized " << index.uncategorized_count() << '\n'
            << "written       " << c.indexPath.string() << '\n';
  return 0;
}

struct ChatFlags {
  int turns = 20;
  std::string transcript;
  std::string user = "user";
  std::string culture = "EN";
  std::string profile;
  bool verbose = false;
};

int cmd_chat(const EngineFlags& flags, const ChatFlags& chat) {
  const EngineConfig c = flags.resolve();
  Engine engine = build_engine(c, c.strategy == Strategy::KeywordCategory);
  if (engine.indexBuilt) {
    std::cerr << "built category index " << c.indexPath.string() << " ("
              << engine.index->categorized_count() << " categorized, "
              << engine.index->uncategorized_count() << " uncategorized)\n";
  }
  PersonProfile profile;
  if (!chat.profile.empty()) {
    profile = load_profile(chat.profile);
    auto diagnostics = validate_profile(profile, *engine.kb);
    if (!diagnostics.empty()) {
      throw ValidationError(diagnostics.front().conceptId, diagnostics.front().message);
    }
  } else {
    profile.userId = chat.user;
    profile.culture = chat.culture;
  }
  SessionState session = engine.manager->new_session("chat", profile, c.strategy, c.seed);

  std::ofstream transcript;
  if (!chat.transcript.empty()) {
    transcript.open(chat.transcript);
    if (!transcript) throw Error("cannot write transcript '" + chat.transcript + "'");
  }
  std::string line;
  for (int turn = 0; turn < chat.turns && std::getline(std::cin, line); ++turn) {
    const Reply reply = engine.manager->step(session, line);
    if (chat.verbose) {
      std::cout << "[" << reply.topicId << " | " << to_string(reply.selectionPath) << "] ";
    }
    std::cout << reply.text << std::endl;
    if (transcript) transcript << trace_line(session, line, reply).dump() << std::endl;
  }
  return 0;
}

ChatService* g_service = nullptr;

int cmd_serve(const EngineFlags& flags) {
  const EngineConfig c = flags.resolve();
  Engine engine = build_engine(c, c.strategy == Strategy::KeywordCategory);
  SessionStore store(c.storageDir);
  ChatService service(*engine.manager, store, c);
  const auto colon = c.listenAddress.rfind(':');
  if (colon == std::string::npos) {
    throw ValidationError("listenAddress", "listen address must be host:port");
  }
  const std::string host = c.listenAddress.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(c.listenAddress.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("listenAddress", "bad port in '" + c.listenAddress + "'");
  }
  g_service = &service;
  std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
  std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!service.listen(host, port)) {
    std::cerr << "error: cannot listen on " << c.listenAddress << " (port busy?)\n";
    return 1;
  }
  return 0;
}

void emit_table(const std::string& title, const std::vector<PairwiseComparison>& table,
                const std::string& format, json& out_json) {
  if (format == "json") {
    out_json[title] = comparison_table_json(table);
  } else {
    std::cout << "# " << title << '\n' << comparison_table_csv(table) << '\n';
  }
}

// participant,group,turn,score
std::map<std::string, std::pair<std::string, std::vector<ExchangeRecord>>> read_ratings(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ratings '" + path + "'");
  std::map<std::string, std::pair<std::string, std::vector<ExchangeRecord>>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (line_no == 1 && line.starts_with("participant"))) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 4) {
      throw ParseError("ratings line " + std::to_string(line_no) + " needs 4 cells");
    }
    auto& [group, records] = out[cells[0]];
    group = cells[1];
    ExchangeRecord r;
    r.sessionId = cells[0];
    try {
      r.turn = std::stoi(cells[2]);
      r.coherenceScore = std::stoi(cells[3]);
    } catch (const std::exception&) {
      throw ParseError("ratings line " + std::to_string(line_no) + " has a non-integer cell");
    }
    records.push_back(std::move(r));
  }
  return out;
}

std::map<std::string, double> participant_coherence(const std::string& path,
                                                    std::map<std::string, std::vector<double>>& groups) {
  std::map<std::string, double> per_participant;
  for (const auto& [participant, entry] : read_ratings(path)) {
    const double m = coherence_mean(entry.second);
    per_participant[participant] = m;
    groups[entry.first].push_back(m);
  }
  return per_participant;
}

int cmd_eval_coherence(const std::string& ratings, const std::string& format) {
  std::map<std::string, std::vector<double>> groups;
  participant_coherence(ratings, groups);
  json out;
  for (const auto& [group, means] : groups) {
    if (format == "json") {
      out["groupMeans"][group] = mean(means);
    } else {
      std::cout << "group " << group << " coherence " << mean(means) << " (n=" << means.size()
                << ")\n";
    }
  }
  emit_table("Coherence", compare_groups(groups), format, out);
  if (format == "json") std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_eval_store(const std::string& dir, const std::string& format) {
  SessionStore store(dir);
  std::map<std::string, std::vector<double>> groups;
  for (const auto& id : store.session_ids()) {
    auto session = store.load_session(id);
    if (!session || session->ratings.empty()) continue;
    std::vector<ExchangeRecord> records;
    for (const auto& [turn, score] : session->ratings) {
      records.push_back({id, turn, "", "", score});
    }
    groups[std::string(to_string(session->strategy))].push_back(coherence_mean(records));
  }
  json out;
  for (const auto& [group, means] : groups) {
    if (format == "json") {
      out["groupMeans"][group] = mean(means);
    } else {
      std::cout << "strategy " << group << " coherence " << mean(means)
                << " (n=" << means.size() << ")\n";
    }
  }
  emit_table("Coherence", compare_groups(groups), format, out);
  if (format == "json") std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_eval_sassi(const std::string& csv, const std::string& scales_path,
                   const std::string& coherence, const std::string& format) {
  ScaleDefinition scales = default_scales();
  if (!scales_path.empty()) {
    std::ifstream in(scales_path);
    if (!in) throw ParseError("cannot open scales '" + scales_path + "'");
    scales = scales_from_json(json::parse(in));
  }
  std::ifstream in(csv);
  if (!in) throw ParseError("cannot open '" + csv + "'");
  const auto responses = parse_sassi_csv(in);

  std::map<std::string, double> coherence_by_participant;
  if (!coherence.empty()) {
    std::map<std::string, std::vector<double>> unused;
    coherence_by_participant = participant_coherence(coherence, unused);
  }

  json out;
  for (const auto& scale : scales) {
    std::map<std::string, std::vector<double>> groups;
    std::vector<double> scale_scores, paired_coherence;
    for (const auto& r : responses) {
      const auto scores = sassi_scores(r, {scale});
      groups[std::to_string(r.groupId)].push_back(scores.front().second);
      if (auto it = coherence_by_participant.find(r.participantId);
          it != coherence_by_participant.end()) {
        scale_scores.push_back(scores.front().second);
        paired_coherence.push_back(it->second);
      }
    }
    std::optional<double> alpha;
    try {
      alpha = cronbach_alpha(scale_item_matrix(responses, scale));
    } catch (const StatsError&) {
    }
    std::optional<double> r;
    if (paired_coherence.size() >= 2) {
      try {
        r = pearson_r(paired_coherence, scale_scores);
      } catch (const StatsError&) {
      }
    }
    if (format == "json") {
      json& s = out["scales"][scale.name];
      s["alpha"] = alpha ? json(*alpha) : json(nullptr);
      s["pearsonWithCoherence"] = r ? json(*r) : json(nullptr);
      for (const auto& [g, v] : groups) s["groupMeans"][g] = mean(v);
      s["comparisons"] = comparison_table_json(compare_groups(groups));
    } else {
      std::cout << "# " << scale.name;
      if (alpha) std::cout << "  alpha=" << *alpha;
      if (r) std::cout << "  r(coherence)=" << *r;
      std::cout << '\n';
      for (const auto& [g, v] : groups) std::cout << "group " << g << " mean " << mean(v) << '\n';
      std::cout << comparison_table_csv(compare_groups(groups)) << '\n';
    }
  }
  if (format == "json") std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_eval_benchmark(const EngineFlags& flags, const std::string& scripts_path, int seed_count,
                       const std::string& format, const std::string& trace_out) {
  EngineConfig c = flags.resolve();
  Engine engine = build_engine(c, true);
  const auto scripts = load_scripts(scripts_path);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seed_count; ++i) seeds.push_back(c.seed + static_cast<std::uint64_t>(i));
  const auto result = run_strategy_benchmark(
      *engine.manager, scripts, {Strategy::KeywordCategory, Strategy::Keyword, Strategy::Random},
      seeds);
  if (!trace_out.empty()) {
    std::ofstream out(trace_out);
    for (const auto& s : result.sessions) {
      for (const auto& line : s.trace) out << line.dump() << '\n';
    }
  }
  if (format == "json") {
    std::cout << benchmark_summary_json(result).dump(2) << '\n';
  } else {
    std::cout << "# proxy coherence (automatic stand-in, not a human rating)\n";
    for (const auto& [strategy, m] : result.groupMeans) {
      std::cout << std::left << std::setw(18) << strategy << m << '\n';
    }
    std::cout << '\n' << comparison_table_csv(result.comparisons);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-grounded dialogue engine"};
  app.require_subcommand(1);

  std::string compile_kb, compile_dump;
  auto* compile = app.add_subcommand("compile", "Validate a KB and compile its dialogue tree");
  compile->add_option("kb", compile_kb, "Knowledge base JSON")->required();
  compile->add_option("--dump", compile_dump, "Write the canonical tree dump here");

  EngineFlags index_flags;
  std::string index_out;
  auto* index = app.add_subcommand("index", "Build the offline topic -> category index");
  index_flags.add_to(index);
  index->add_option("--out", index_out, "Index output file");

  EngineFlags chat_flags;
  ChatFlags chat;
  auto* chat_cmd = app.add_subcommand("chat", "Converse on the terminal, one utterance per line");
  chat_flags.add_to(chat_cmd);
  chat_cmd->add_option("--strategy", chat_flags.strategy, "keyword | keyword-category | random");
  chat_cmd->add_option("--seed", chat_flags.seed, "Random seed");
  chat_cmd->add_option("--turns", chat.turns, "Number of exchanges")->capture_default_str();
  chat_cmd->add_option("--transcript", chat.transcript, "Decision-trace JSONL output");
  chat_cmd->add_option("--user", chat.user, "User id");
  chat_cmd->add_option("--culture", chat.culture, "Culture id")->capture_default_str();
  chat_cmd->add_option("--profile", chat.profile, "Person profile JSON");
  chat_cmd->add_flag("--verbose,-v", chat.verbose, "Show topic and selection path");

  EngineFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve_flags.add_to(serve);
  serve->add_option("--strategy", serve_flags.strategy, "Default strategy");
  serve->add_option("--seed", serve_flags.seed, "Default seed");
  serve->add_option("--listen", serve_flags.listen, "host:port");

  auto* eval = app.add_subcommand("eval", "Evaluation statistics");
  eval->require_subcommand(1);
  std::string format = "csv";

  std::string ratings_path;
  auto* coherence = eval->add_subcommand("coherence", "Coherence ratings CSV: participant,group,turn,score");
  coherence->add_option("ratings", ratings_path)->required();
  coherence->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  std::string store_dir;
  auto* store = eval->add_subcommand("store", "Coherence ratings collected by the service");
  store->add_option("dir", store_dir)->required();
  store->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  std::string sassi_csv, scales_path, sassi_coherence;
  auto* sassi = eval->add_subcommand("sassi", "SASSI CSV: participant,group,item1..item34");
  sassi->add_option("csv", sassi_csv)->required();
  sassi->add_option("--scales", scales_path, "Scale definition JSON");
  sassi->add_option("--coherence", sassi_coherence, "Ratings CSV for Pearson correlation");
  sassi->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  EngineFlags bench_flags;
  std::string scripts_path, bench_trace;
  int seed_count = 3;
  auto* bench = eval->add_subcommand("benchmark", "Scripted strategy comparison (proxy coherence)");
  bench_flags.add_to(bench);
  bench->add_option("--scripts", scripts_path, "Persona scripts JSON")->required();
  bench->add_option("--seeds", seed_count, "Seeds per persona")->capture_default_str();
  bench->add_option("--seed", bench_flags.seed, "First seed");
  bench->add_option("--trace", bench_trace, "Write every decision-trace line here");
  bench->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compile) return cmd_compile(compile_kb, compile_dump);
    if (*index) return cmd_index(index_flags, index_out);
    if (*chat_cmd) return cmd_chat(chat_flags, chat);
    if (*serve) return cmd_serve(serve_flags);
    if (*coherence) return cmd_eval_coherence(ratings_path, format);
    if (*store) return cmd_eval_store(store_dir, format);
    if (*sassi) return cmd_eval_sassi(sassi_csv, scales_path, sassi_coherence, format);
    if (*bench) return cmd_eval_benchmark(bench_flags, scripts_path, seed_count, format, bench_trace);
  } catch (const ValidationError& e) {
    std::cerr << "error (" << e.subject() << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
