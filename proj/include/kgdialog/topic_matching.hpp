#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdialog/dialogue_tree.hpp"

namespace kgdialog {

// ---------------------------------------------------------------------------
// Keywords
// ---------------------------------------------------------------------------

/// `abc*` matches tokens starting with "abc"; a lone `*` matches anything,
/// including an empty token list.
bool pattern_matches(std::string_view pattern, std::span<const std::string> tokens);
bool rule_matches(const KeywordRule& rule, std::span<const std::string> tokens);

/// Topics with at least one rule whose two patterns both match, in tree order.
std::vector<std::string> match_keywords(std::string_view utterance, const DialogueTree& tree);

inline constexpr std::size_t kMinClassifierTokens = 20;

/// Repeats `text` (space-joined) the fewest whole times reaching `min_tokens`.
std::string pad_to_min_tokens(std::string_view text, std::size_t min_tokens = kMinClassifierTokens);

// ---------------------------------------------------------------------------
// Categories
// ---------------------------------------------------------------------------

/// Slash-delimited hierarchical label such as "/Food & Drink/Beverages".
bool is_valid_category_path(std::string_view path);

struct CategoryScore {
  std::string category;
  double confidence = 0.0;

  bool operator==(const CategoryScore&) const = default;
};

struct ClassificationResult {
  /// Distinct categories by descending confidence.
  std::vector<CategoryScore> entries;

  std::set<std::string> categories() const;
  bool empty() const { return entries.empty(); }
  bool operator==(const ClassificationResult&) const = default;
};

nlohmann::json classification_to_json(const ClassificationResult& result);
/// Validates ranges and ordering; throws TransportError on a bad payload.
ClassificationResult classification_from_json(const nlohmann::json& doc);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ClassificationResult classify(std::string_view text) = 0;
};

struct Lexicon {
  std::vector<std::string> categories;
  /// stem -> categories
  std::map<std::string, std::vector<std::string>> entries;
};

Lexicon lexicon_from_json(const nlohmann::json& doc);
Lexicon load_lexicon(const std::filesystem::path& path);

/// Deterministic bag-of-words classifier. A token hits a stem when it equals
/// the stem or the stem plus one of the suffixes s/es/ing/ed. A category's
/// confidence is its share of all hits.
class LexiconClassifier final : public Classifier {
 public:
  explicit LexiconClassifier(Lexicon lexicon);
  ClassificationResult classify(std::string_view text) override;

 private:
  Lexicon lexicon_;
};

/// Client for an external classification service:
/// POST {endpoint}/classify {"text": ...} -> {"entries": [{"category","confidence"}]}.
/// Each call opens its own connection, so concurrent calls are safe.
class RemoteClassifier final : public Classifier {
 public:
  explicit RemoteClassifier(std::string endpoint,
                            std::chrono::milliseconds timeout = std::chrono::seconds(5));
  /// Throws TransportError on connection failure, non-200 or malformed body.
  ClassificationResult classify(std::string_view text) override;

 private:
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

struct CategoryIndex {
  std::map<std::string, std::set<std::string>> byTopic;
  std::map<std::string, std::set<std::string>> byCategory;

  std::size_t categorized_count() const;
  std::size_t uncategorized_count() const;
  void add(const std::string& topic, std::set<std::string> categories);
  bool operator==(const CategoryIndex&) const = default;
};

/// Offline pass: every topic's sentences are concatenated, padded and
/// classified. Topics with no sentences or no result keep an empty set.
/// Classifier failures abort with IndexBuildError naming the topic.
CategoryIndex build_category_index(const DialogueTree& tree, Classifier& classifier);

/// Topic id -> sorted category list.
nlohmann::json index_to_json(const CategoryIndex& index);
CategoryIndex index_from_json(const nlohmann::json& doc);

/// Copies each topic's categories onto its tree node.
void attach_categories(DialogueTree& tree, const CategoryIndex& index);

struct TopicOverlap {
  std::string topicId;
  std::size_t overlap = 0;

  bool operator==(const TopicOverlap&) const = default;
};

/// Topics sharing at least one category with `categories`, ranked by overlap
/// (desc), depth (asc), then topic id. Restricted to `candidates` if given.
std::vector<TopicOverlap> match_categories(const std::set<std::string>& categories,
                                           const CategoryIndex& index, const DialogueTree& tree,
                                           const std::vector<std::string>* candidates = nullptr);

}  // namespace kgdialog
