#include "kgdialog/benchmark.hpp"

#include <algorithm>
#include <fstream>

#include "kgdialog/errors.hpp"

namespace kgdialog {

using nlohmann::json;

std::vector<PersonaScript> scripts_from_json(const json& doc) {
  std::vector<PersonaScript> out;
  try {
    for (const auto& p : doc.at("personas")) {
      PersonaScript script;
      script.personaId = p.at("id").get<std::string>();
      script.culture = p.value("culture", std::string("EN"));
      for (const auto& line : p.at("lines")) {
        if (line.is_string()) {
          script.lines.push_back({line.get<std::string>(), {}});
        } else {
          script.lines.push_back({line.at("text").get<std::string>(),
                                  line.value("intended", std::vector<std::string>{})});
        }
      }
      out.push_back(std::move(script));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed benchmark scripts: ") + e.what());
  }
  return out;
}

std::vector<PersonaScript> load_scripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scripts '" + path.string() + "'");
  try {
    return scripts_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed benchmark scripts: ") + e.what());
  }
}

int proxy_coherence(const Reply& reply, const ScriptLine& line) {
  switch (reply.selectionPath) {
    case SelectionPath::KeywordJump:
    case SelectionPath::CategoryJump: {
      const bool on_target = std::find(line.intended.begin(), line.intended.end(),
                                       reply.topicId) != line.intended.end();
      return on_target ? 7 : 1;
    }
    case SelectionPath::Stay:
    case SelectionPath::Descend:
    case SelectionPath::Command:
      return 4;
    case SelectionPath::RandomJump:
      return 1;
  }
  return 1;
}

BenchmarkResult run_strategy_benchmark(const DialogueManager& manager,
                                       const std::vector<PersonaScript>& scripts,
                                       const std::vector<Strategy>& strategies,
                                       const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error("benchmark needs at least one seed");
  BenchmarkResult result;
  for (Strategy strategy : strategies) {
    auto& means = result.personaMeans[std::string(to_string(strategy))];
    for (const auto& script : scripts) {
      double persona_total = 0;
      for (std::uint64_t seed : seeds) {
        BenchmarkSession run;
        run.personaId = script.personaId;
        run.strategy = strategy;
        run.seed = seed;
        PersonProfile profile;
        profile.userId = script.personaId;
        profile.culture = script.culture;
        auto session = manager.new_session(
            script.personaId + "/" + std::string(to_string(strategy)) + "/" + std::to_string(seed),
            std::move(profile), strategy, seed);
        double total = 0;
        for (const auto& line : script.lines) {
          const Reply reply = manager.step(session, line.text);
          run.trace.push_back(trace_line(session, line.text, reply));
          const int score = proxy_coherence(reply, line);
          run.proxyScores.push_back(score);
          total += score;
        }
        persona_total += script.lines.empty() ? 0.0 : total / static_cast<double>(script.lines.size());
        result.sessions.push_back(std::move(run));
      }
      means.push_back(persona_total / static_cast<double>(seeds.size()));
    }
    result.groupMeans[std::string(to_string(strategy))] = means.empty() ? 0.0 : mean(means);
  }
  result.comparisons = compare_groups(result.personaMeans);
  return result;
}

json benchmark_summary_json(const BenchmarkResult& result) {
  return {{"groupMeans", result.groupMeans},
          {"personaMeans", result.personaMeans},
          {"comparisons", comparison_table_json(result.comparisons)},
          {"sessions", result.sessions.size()}};
}

}  // namespace kgdialog
