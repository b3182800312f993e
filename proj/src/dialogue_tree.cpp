#include "kgdialog/dialogue_tree.hpp"

#include <algorithm>
#include <functional>

#include "kgdialog/errors.hpp"
#include "kgdialog/text.hpp"

namespace kgdialog {

using nlohmann::json;

std::size_t TopicNode::sentence_count() const {
  std::size_t n = 0;
  for (const auto& [kind, list] : sentences) n += list.size();
  return n;
}

DialogueTree::DialogueTree(std::string root_id, std::vector<TopicNode> nodes)
    : root_id_(std::move(root_id)), nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) by_id_.emplace(nodes_[i].topicId, i);
  stats_ = tree_stats(*this);
}

const TopicNode* DialogueTree::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &nodes_[it->second];
}

const TopicNode& DialogueTree::at(std::string_view id) const {
  const TopicNode* node = find(id);
  if (node == nullptr) throw Error("unknown topic '" + std::string(id) + "'");
  return *node;
}

std::string composite_topic_id(std::string_view filler_id, std::string_view source_id) {
  return std::string(filler_id) + "+" + std::string(source_id);
}

namespace {

// Head word of a display name as a prefix pattern: "great actors" -> "actor*".
std::string head_pattern(std::string_view display_name) {
  auto tokens = tokenize(display_name);
  if (tokens.empty()) return "*";
  std::string head = tokens.back();
  if (head.size() > 3 && head.back() == 's') head.pop_back();
  return head + "*";
}

void replace_all(std::string& text, std::string_view from, std::string_view to) {
  for (std::size_t pos = text.find(from); pos != std::string::npos;
       pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
}

}  // namespace

std::vector<std::string> expand_template(const SentenceTemplate& tmpl, const TopicNode& node) {
  if (tmpl.text.empty() || !is_valid_placeholder_text(tmpl.text)) {
    throw ExpansionError("cannot expand template '" + tmpl.text + "'");
  }
  // The filler is swapped for a sentinel first so that display names
  // substituted for one placeholder are never rescanned for the other.
  auto bind = [&](const std::string* filler) {
    std::string text = tmpl.text;
    replace_all(text, kFillerPlaceholder, "\x01");
    replace_all(text, kNamePlaceholder, node.displayName);
    if (filler != nullptr) replace_all(text, "\x01", *filler);
    return text;
  };
  std::vector<std::string> bound;
  if (tmpl.uses_filler()) {
    for (const auto& filler : node.fillerNames) bound.push_back(bind(&filler));
  } else {
    bound.push_back(bind(nullptr));
  }
  return bound;
}

DialogueTree build_tree(const KnowledgeBase& kb) {
  std::vector<TopicNode> nodes;
  std::vector<const SentenceTemplate*> inherited;

  auto add_sentences = [&](TopicNode& node) {
    for (const SentenceTemplate* t : inherited) {
      auto expanded = expand_template(*t, node);
      if (expanded.empty()) continue;
      auto& list = node.sentences[t->kind];
      list.insert(list.end(), std::make_move_iterator(expanded.begin()),
                  std::make_move_iterator(expanded.end()));
    }
  };

  std::function<std::size_t(const Concept&, std::optional<std::size_t>)> visit =
      [&](const Concept& source, std::optional<std::size_t> parent) -> std::size_t {
    const std::size_t mark = inherited.size();
    for (const auto& t : source.templates) inherited.push_back(&t);

    const std::size_t index = nodes.size();
    {
      TopicNode node;
      node.topicId = source.id;
      node.sourceConceptId = source.id;
      if (parent) {
        node.parent = nodes[*parent].topicId;
        node.depth = nodes[*parent].depth + 1;
      }
      node.displayName = source.displayName;
      for (const auto& link : source.topicLinks) {
        node.fillerNames.push_back(kb.at(link).displayName);
      }
      node.keywordRules = source.keywordRules;
      node.likeliness = source.likeliness;
      add_sentences(node);
      nodes.push_back(std::move(node));
    }

    for (std::size_t child : kb.children_of(source.id)) {
      const std::size_t child_index = visit(kb.concepts()[child], index);
      nodes[index].children.push_back(nodes[child_index].topicId);
    }

    for (const auto& link : source.topicLinks) {
      const Concept& filler = kb.at(link);
      TopicNode node;
      node.topicId = composite_topic_id(filler.id, source.id);
      node.sourceConceptId = source.id;
      node.fillerConceptId = filler.id;
      node.parent = source.id;
      node.depth = nodes[index].depth + 1;
      node.displayName = filler.displayName + " " + source.displayName;
      node.fillerNames = {filler.displayName};
      node.keywordRules = {{head_pattern(filler.displayName), head_pattern(source.displayName)}};
      node.likeliness = filler.likeliness.empty() ? source.likeliness : filler.likeliness;
      add_sentences(node);
      nodes[index].children.push_back(node.topicId);
      nodes.push_back(std::move(node));
    }

    inherited.resize(mark);
    return index;
  };

  visit(kb.root(), std::nullopt);
  return DialogueTree(kb.root().id, std::move(nodes));
}

TreeStats tree_stats(const DialogueTree& tree) {
  TreeStats stats;
  stats.topicCount = tree.nodes().size();
  for (const auto& node : tree.nodes()) {
    stats.maxDepth = std::max(stats.maxDepth, node.depth);
    for (const auto& [kind, list] : node.sentences) {
      stats.sentenceCount += list.size();
      stats.sentencesPerKind[kind] += list.size();
    }
  }
  return stats;
}

json tree_to_json(const DialogueTree& tree) {
  json nodes = json::array();
  for (const auto& node : tree.nodes()) {
    json sentences = json::object();
    for (const auto& [kind, list] : node.sentences) sentences[std::string(to_string(kind))] = list;
    json rules = json::array();
    for (const auto& r : node.keywordRules) rules.push_back({r.first, r.second});
    json likeliness = json::object();
    for (const auto& [culture, level] : node.likeliness) likeliness[culture] = to_string(level);
    nodes.push_back({
        {"id", node.topicId},
        {"source", node.sourceConceptId},
        {"filler", node.fillerConceptId ? json(*node.fillerConceptId) : json(nullptr)},
        {"parent", node.parent ? json(*node.parent) : json(nullptr)},
        {"children", node.children},
        {"depth", node.depth},
        {"displayName", node.displayName},
        {"sentenceCount", node.sentence_count()},
        {"sentences", sentences},
        {"keywords", rules},
        {"categories", node.categories},
        {"likeliness", likeliness},
    });
  }
  const auto& s = tree.stats();
  json per_kind = json::object();
  for (const auto& [kind, n] : s.sentencesPerKind) per_kind[std::string(to_string(kind))] = n;
  return {{"root", tree.root_id()},
          {"stats",
           {{"topicCount", s.topicCount},
            {"sentenceCount", s.sentenceCount},
            {"maxDepth", s.maxDepth},
            {"sentencesPerKind", per_kind}}},
          {"nodes", nodes}};
}

}  // namespace kgdialog
