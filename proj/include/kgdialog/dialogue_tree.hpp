#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdialog/knowledge_base.hpp"

namespace kgdialog {

struct TopicNode {
  std::string topicId;
  std::string sourceConceptId;
  /// Set only on composite nodes generated from a topic link.
  std::optional<std::string> fillerConceptId;
  std::optional<std::string> parent;
  std::vector<std::string> children;
  int depth = 0;
  std::string displayName;
  /// Display names bound to `$hasTopic*hasName` at this node.
  std::vector<std::string> fillerNames;
  std::map<SentenceKind, std::vector<std::string>> sentences;
  std::vector<KeywordRule> keywordRules;
  std::set<std::string> categories;
  std::map<std::string, Likeliness> likeliness;

  std::size_t sentence_count() const;
  bool is_leaf() const { return children.empty(); }
};

struct TreeStats {
  std::size_t topicCount = 0;
  std::size_t sentenceCount = 0;
  int maxDepth = 0;
  std::map<SentenceKind, std::size_t> sentencesPerKind;

  bool operator==(const TreeStats&) const = default;
};

class DialogueTree {
 public:
  DialogueTree() = default;
  DialogueTree(std::string root_id, std::vector<TopicNode> nodes);

  const std::string& root_id() const { return root_id_; }
  const TopicNode& root() const { return at(root_id_); }
  /// Nodes in pre-order (parent before children, children in declaration order).
  const std::vector<TopicNode>& nodes() const { return nodes_; }
  std::vector<TopicNode>& mutable_nodes() { return nodes_; }
  const TopicNode* find(std::string_view id) const;
  const TopicNode& at(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::size_t size() const { return nodes_.size(); }
  const TreeStats& stats() const { return stats_; }

 private:
  std::string root_id_;
  std::vector<TopicNode> nodes_;
  std::unordered_map<std::string, std::size_t> by_id_;
  TreeStats stats_;
};

/// Composite topic id for a topic-link filler under its source concept.
std::string composite_topic_id(std::string_view filler_id, std::string_view source_id);

DialogueTree build_tree(const KnowledgeBase& kb);

/// Expands both placeholders for `node`. A filler template at a node without
/// fillers yields nothing; a plain template yields exactly one sentence.
std::vector<std::string> expand_template(const SentenceTemplate& tmpl, const TopicNode& node);

TreeStats tree_stats(const DialogueTree& tree);

/// Canonical, key-sorted dump of the compiled tree.
nlohmann::json tree_to_json(const DialogueTree& tree);

}  // namespace kgdialog
