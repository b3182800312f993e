#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdialog/dialogue_manager.hpp"
#include "kgdialog/eval_stats.hpp"

namespace kgdialog {

/// One scripted user turn. `intended` lists the topics a jump should land on
/// to count as coherent; empty means no jump is appropriate.
struct ScriptLine {
  std::string text;
  std::vector<std::string> intended;
};

struct PersonaScript {
  std::string personaId;
  std::string culture;
  std::vector<ScriptLine> lines;
};

std::vector<PersonaScript> scripts_from_json(const nlohmann::json& doc);
std::vector<PersonaScript> load_scripts(const std::filesystem::path& path);

/// Automatic stand-in for the human coherence rating. Not a human judgement:
/// 7 for a keyword/category jump onto an intended topic, 4 for staying on the
/// topic or descending, 1 for any other jump (random or off-target).
int proxy_coherence(const Reply& reply, const ScriptLine& line);

struct BenchmarkSession {
  std::string personaId;
  Strategy strategy = Strategy::Keyword;
  std::uint64_t seed = 0;
  std::vector<nlohmann::json> trace;
  std::vector<int> proxyScores;
};

struct BenchmarkResult {
  std::vector<BenchmarkSession> sessions;
  /// strategy name -> per-persona proxy mean (averaged over seeds), persona order
  std::map<std::string, std::vector<double>> personaMeans;
  std::map<std::string, double> groupMeans;
  std::vector<PairwiseComparison> comparisons;
};

BenchmarkResult run_strategy_benchmark(const DialogueManager& manager,
                                       const std::vector<PersonaScript>& scripts,
                                       const std::vector<Strategy>& strategies,
                                       const std::vector<std::uint64_t>& seeds);

nlohmann::json benchmark_summary_json(const BenchmarkResult& result);

}  // namespace kgdialog
