#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgdialog {

enum class SentenceKind {
  YesNoQuestion,
  PositiveAssertion,
  ActivityProposal,
  OpenQuestion,
  NegativeAssertion,
};

inline constexpr SentenceKind kAllKinds[] = {
    SentenceKind::YesNoQuestion,    SentenceKind::PositiveAssertion,
    SentenceKind::ActivityProposal, SentenceKind::OpenQuestion,
    SentenceKind::NegativeAssertion,
};

std::string_view to_string(SentenceKind kind);
std::optional<SentenceKind> parse_sentence_kind(std::string_view name);
bool is_assertion(SentenceKind kind);
bool is_question(SentenceKind kind);

enum class Origin { Expert, UserTaught };

std::string_view to_string(Origin origin);
std::optional<Origin> parse_origin(std::string_view name);

/// Ordinal attitude estimate. Declaration order is the total order.
enum class Likeliness { VeryLow, Low, Medium, High, VeryHigh };

std::string_view to_string(Likeliness level);
/// Accepts "VeryHigh", "Very High", "very-high" and so on.
std::optional<Likeliness> parse_likeliness(std::string_view name);
Likeliness raise(Likeliness level);
Likeliness lower(Likeliness level);

inline constexpr std::string_view kNamePlaceholder = "$hasName";
inline constexpr std::string_view kFillerPlaceholder = "$hasTopic*hasName";

struct SentenceTemplate {
  std::string text;
  SentenceKind kind = SentenceKind::PositiveAssertion;
  Origin origin = Origin::Expert;

  bool uses_filler() const;
  bool operator==(const SentenceTemplate&) const = default;
};

/// Two keyword patterns that must both match an utterance. A pattern is a
/// lowercase token, a prefix ending in `*`, or the lone wildcard `*`.
struct KeywordRule {
  std::string first;
  std::string second;

  bool operator==(const KeywordRule&) const = default;
};

struct Concept {
  std::string id;
  std::string displayName;
  std::optional<std::string> parentId;
  std::vector<std::string> topicLinks;
  std::vector<SentenceTemplate> templates;
  std::vector<KeywordRule> keywordRules;
  std::map<std::string, Likeliness> likeliness;

  bool operator==(const Concept&) const = default;
};

struct Diagnostic {
  std::string conceptId;
  std::string rule;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

/// Pure check of every structural invariant. Empty result iff the concept
/// collection is valid.
std::vector<Diagnostic> validate_kb(const std::vector<Concept>& concepts);

bool is_valid_placeholder_text(std::string_view text);
bool is_valid_pattern(std::string_view pattern);

/// Validated, immutable concept collection.
class KnowledgeBase {
 public:
  KnowledgeBase(std::vector<std::string> cultures, std::vector<Concept> concepts);

  const std::vector<std::string>& cultures() const { return cultures_; }
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& root() const { return concepts_[root_]; }
  const Concept* find(std::string_view id) const;
  const Concept& at(std::string_view id) const;

  /// Direct subclasses in declaration order.
  const std::vector<std::size_t>& children_of(std::string_view id) const;

  bool operator==(const KnowledgeBase& other) const {
    return cultures_ == other.cultures_ && concepts_ == other.concepts_;
  }

 private:
  std::vector<std::string> cultures_;
  std::vector<Concept> concepts_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::size_t>> children_;
  std::size_t root_ = 0;
};

KnowledgeBase kb_from_json(const nlohmann::json& doc);
nlohmann::json kb_to_json(const KnowledgeBase& kb);
KnowledgeBase load_kb(std::istream& in);
KnowledgeBase load_kb(const std::filesystem::path& path);
void save_kb(const KnowledgeBase& kb, std::ostream& out);

struct PersonProfile {
  std::string userId;
  std::string culture;
  std::map<std::string, Likeliness> likelinessOverrides;
  std::map<std::string, std::vector<SentenceTemplate>> taughtSentences;
  std::map<std::string, std::string> facts;

  bool operator==(const PersonProfile&) const = default;
};

PersonProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const PersonProfile& profile);
PersonProfile load_profile(const std::filesystem::path& path);

/// Override keys and taught-sentence keys must name concepts, or composite
/// topics of the form "Filler+Source" where Filler is a topic link of Source.
std::vector<Diagnostic> validate_profile(const PersonProfile& profile, const KnowledgeBase& kb);

/// Override, else the culture default, else Medium.
Likeliness effective_likeliness(const Concept& source, const PersonProfile& profile);
Likeliness effective_likeliness(std::string_view key,
                                const std::map<std::string, Likeliness>& culture_defaults,
                                const PersonProfile& profile);

}  // namespace kgdialog
