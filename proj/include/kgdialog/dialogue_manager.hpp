#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdialog/dialogue_tree.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "kgdialog/rng.hpp"
#include "kgdialog/topic_matching.hpp"

namespace kgdialog {

enum class Strategy { Keyword, KeywordCategory, Random };

std::string_view to_string(Strategy strategy);
std::optional<Strategy> parse_strategy(std::string_view name);

enum class SelectionPath { KeywordJump, CategoryJump, Stay, Descend, RandomJump, Command };

inline constexpr SelectionPath kAllSelectionPaths[] = {
    SelectionPath::KeywordJump, SelectionPath::CategoryJump, SelectionPath::Stay,
    SelectionPath::Descend,     SelectionPath::RandomJump,   SelectionPath::Command,
};

std::string_view to_string(SelectionPath path);
std::optional<SelectionPath> parse_selection_path(std::string_view name);

/// Order in which a topic is explored: question first, then comments,
/// proposals and open questions.
inline constexpr SentenceKind kKindSequence[] = {
    SentenceKind::YesNoQuestion,    SentenceKind::PositiveAssertion,
    SentenceKind::ActivityProposal, SentenceKind::OpenQuestion,
    SentenceKind::NegativeAssertion,
};

inline constexpr double kPrefixProbability = 0.5;

struct HistoryEntry {
  std::string speaker;  // "user" or "system"
  std::string text;
  std::string topicId;
  std::optional<SelectionPath> path;
  std::optional<SentenceKind> kind;

  bool operator==(const HistoryEntry&) const = default;
};

struct SessionState {
  std::string sessionId;
  PersonProfile profile;
  std::string currentTopicId;
  std::map<std::string, std::set<std::string>> usedSentences;
  std::map<std::string, std::size_t> kindCursor;
  std::vector<HistoryEntry> history;
  Rng rng;
  Strategy strategy = Strategy::Keyword;
  int turnCount = 0;
  /// turn (1-based) -> coherence rating 1..7
  std::map<int, int> ratings;

  bool operator==(const SessionState& other) const;
};

nlohmann::json session_to_json(const SessionState& session);
SessionState session_from_json(const nlohmann::json& doc);

struct Reply {
  std::string text;
  std::string topicId;
  SelectionPath selectionPath = SelectionPath::Stay;
  std::optional<SentenceKind> sentenceKind;
  /// Set when the topic had no unused sentence left and one was repeated.
  bool reused = false;
  std::optional<std::string> activity;
  /// Flow-chart branch decisions taken for this turn, in order.
  std::vector<std::string> decisions;
};

class CommandDetector {
 public:
  virtual ~CommandDetector() = default;
  virtual std::optional<std::string> detect(std::string_view utterance) const = 0;
};

class NullCommandDetector final : public CommandDetector {
 public:
  std::optional<std::string> detect(std::string_view) const override { return std::nullopt; }
};

/// Maps trigger phrases to activity ids; the first phrase found wins.
class PhraseCommandDetector final : public CommandDetector {
 public:
  explicit PhraseCommandDetector(std::vector<std::pair<std::string, std::string>> triggers);
  std::optional<std::string> detect(std::string_view utterance) const override;

 private:
  std::vector<std::pair<std::vector<std::string>, std::string>> triggers_;
};

struct Phrasebook {
  std::vector<std::string> prefixes;
  std::vector<std::string> affirmations;
  std::vector<std::string> negations;
  std::string commandAck = "Sure, I will take care of that.";
  /// Trigger phrase -> activity, handed to a PhraseCommandDetector.
  std::vector<std::pair<std::string, std::string>> commands;
};

Phrasebook phrasebook_from_json(const nlohmann::json& doc);
Phrasebook load_phrasebook(const std::filesystem::path& path);
Phrasebook default_phrasebook();

struct TopicChoice {
  std::string topicId;
  SelectionPath path;
};

struct ComposedSentence {
  std::string text;
  SentenceKind kind;
  bool reused = false;
};

/// Conversation driver over an immutable tree. All methods are const and
/// may be called concurrently for distinct sessions; a session must not be
/// stepped concurrently.
class DialogueManager {
 public:
  struct Assets {
    std::shared_ptr<const DialogueTree> tree;
    /// Required by the keyword-category strategy only.
    std::shared_ptr<const CategoryIndex> index;
    std::shared_ptr<Classifier> classifier;
    std::shared_ptr<const CommandDetector> commands;
    Phrasebook phrases;
  };

  explicit DialogueManager(Assets assets);

  const DialogueTree& tree() const { return *assets_.tree; }
  const Assets& assets() const { return assets_; }
  bool supports(Strategy strategy) const;

  SessionState new_session(std::string session_id, PersonProfile profile, Strategy strategy,
                           std::uint64_t seed) const;

  Reply step(SessionState& session, std::string_view utterance) const;

  TopicChoice select_topic_keyword(SessionState& session, std::string_view utterance,
                                   std::vector<std::string>* decisions = nullptr) const;
  TopicChoice select_topic_keyword_category(SessionState& session, std::string_view utterance,
                                            std::vector<std::string>* decisions = nullptr) const;
  std::string select_topic_random(SessionState& session) const;

  bool topic_exhausted(const SessionState& session, std::string_view topic_id) const;
  std::string descend(SessionState& session, std::string_view topic_id) const;
  ComposedSentence compose_reply(SessionState& session, std::string_view topic_id) const;

  /// Applies a yes/no answer to the topic of the previous system turn.
  /// Returns the new override level, or nothing if no change was made.
  std::optional<Likeliness> update_profile_from_answer(SessionState& session,
                                                       std::string_view utterance) const;

  /// Sentence inventory for a topic, tree sentences plus the user's taught
  /// ones, by kind.
  std::map<SentenceKind, std::vector<std::string>> inventory(const SessionState& session,
                                                              std::string_view topic_id) const;

  Likeliness topic_likeliness(const SessionState& session, std::string_view topic_id) const;

 private:
  std::string random_root_child(SessionState& session) const;
  std::string closest_to_root(SessionState& session, const std::vector<std::string>& topics) const;

  Assets assets_;
};

/// One JSON-lines decision-trace record for the turn just taken.
nlohmann::json trace_line(const SessionState& session, std::string_view utterance,
                          const Reply& reply);

}  // namespace kgdialog
