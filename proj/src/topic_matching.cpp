#include "kgdialog/topic_matching.hpp"

#include <algorithm>
#include <fstream>

#include <httplib.h>

#include "kgdialog/errors.hpp"
#include "kgdialog/text.hpp"

namespace kgdialog {

using nlohmann::json;

bool pattern_matches(std::string_view pattern, std::span<const std::string> tokens) {
  if (pattern == "*") return true;
  if (pattern.ends_with('*')) {
    const auto prefix = pattern.substr(0, pattern.size() - 1);
    return std::any_of(tokens.begin(), tokens.end(),
                       [&](const std::string& t) { return t.starts_with(prefix); });
  }
  return std::any_of(tokens.begin(), tokens.end(),
                     [&](const std::string& t) { return t == pattern; });
}

bool rule_matches(const KeywordRule& rule, std::span<const std::string> tokens) {
  return pattern_matches(rule.first, tokens) && pattern_matches(rule.second, tokens);
}

std::vector<std::string> match_keywords(std::string_view utterance, const DialogueTree& tree) {
  const auto tokens = tokenize(utterance);
  std::vector<std::string> out;
  if (tokens.empty()) return out;
  for (const auto& node : tree.nodes()) {
    if (std::any_of(node.keywordRules.begin(), node.keywordRules.end(),
                    [&](const KeywordRule& r) { return rule_matches(r, tokens); })) {
      out.push_back(node.topicId);
    }
  }
  return out;
}

std::string pad_to_min_tokens(std::string_view text, std::size_t min_tokens) {
  if (min_tokens == 0) throw PaddingError("minimum token count must be positive");
  const std::size_t n = count_tokens(text);
  if (n == 0) throw PaddingError("cannot pad a text without tokens");
  if (n >= min_tokens) return std::string(text);
  const std::size_t copies = (min_tokens + n - 1) / n;
  std::string out(text);
  for (std::size_t i = 1; i < copies; ++i) {
    out += ' ';
    out += text;
  }
  return out;
}

bool is_valid_category_path(std::string_view path) {
  if (path.size() < 2 || path.front() != '/') return false;
  std::size_t start = 1;
  while (start <= path.size()) {
    const std::size_t end = std::min(path.find('/', start), path.size());
    if (end == start) return false;
    start = end + 1;
  }
  return true;
}

std::set<std::string> ClassificationResult::categories() const {
  std::set<std::string> out;
  for (const auto& e : entries) out.insert(e.category);
  return out;
}

json classification_to_json(const ClassificationResult& result) {
  json entries = json::array();
  for (const auto& e : result.entries) {
    entries.push_back({{"category", e.category}, {"confidence", e.confidence}});
  }
  return {{"entries", entries}};
}

ClassificationResult classification_from_json(const json& doc) {
  ClassificationResult result;
  try {
    for (const auto& e : doc.at("entries")) {
      CategoryScore score{e.at("category").get<std::string>(), e.at("confidence").get<double>()};
      if (!is_valid_category_path(score.category)) {
        throw TransportError("invalid category path '" + score.category + "'");
      }
      if (!(score.confidence >= 0.0 && score.confidence <= 1.0)) {
        throw TransportError("confidence out of [0,1] for '" + score.category + "'");
      }
      result.entries.push_back(std::move(score));
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed classification payload: ") + e.what());
  }
  // Duplicate categories keep their highest confidence.
  std::stable_sort(result.entries.begin(), result.entries.end(),
                   [](const CategoryScore& a, const CategoryScore& b) {
                     return a.confidence > b.confidence;
                   });
  std::set<std::string> seen;
  std::erase_if(result.entries,
                [&](const CategoryScore& e) { return !seen.insert(e.category).second; });
  return result;
}

Lexicon lexicon_from_json(const json& doc) {
  Lexicon lex;
  try {
    lex.categories = doc.value("categories", std::vector<std::string>{});
    for (const auto& [stem, cats] : doc.at("lexicon").items()) {
      auto list = cats.get<std::vector<std::string>>();
      for (const auto& c : list) {
        if (!is_valid_category_path(c)) {
          throw ValidationError(stem, "invalid category path '" + c + "' for stem '" + stem + "'");
        }
      }
      lex.entries.emplace(to_lower(stem), std::move(list));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed lexicon: ") + e.what());
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open lexicon '" + path.string() + "'");
  try {
    return lexicon_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed lexicon: ") + e.what());
  }
}

LexiconClassifier::LexiconClassifier(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

namespace {

constexpr std::string_view kSuffixes[] = {"s", "es", "ing", "ed"};

const std::vector<std::string>* lookup_stem(const Lexicon& lex, const std::string& token) {
  if (auto it = lex.entries.find(token); it != lex.entries.end()) return &it->second;
  for (std::string_view suffix : kSuffixes) {
    if (token.size() > suffix.size() && token.ends_with(suffix)) {
      if (auto it = lex.entries.find(token.substr(0, token.size() - suffix.size()));
          it != lex.entries.end()) {
        return &it->second;
      }
    }
  }
  return nullptr;
}

}  // namespace

ClassificationResult LexiconClassifier::classify(std::string_view text) {
  std::map<std::string, std::size_t> hits;
  std::size_t total = 0;
  for (const auto& token : tokenize(text)) {
    if (const auto* cats = lookup_stem(lexicon_, token)) {
      for (const auto& c : *cats) {
        ++hits[c];
        ++total;
      }
    }
  }
  ClassificationResult result;
  for (const auto& [category, n] : hits) {
    result.entries.push_back({category, static_cast<double>(n) / static_cast<double>(total)});
  }
  std::stable_sort(result.entries.begin(), result.entries.end(),
                   [](const CategoryScore& a, const CategoryScore& b) {
                     return a.confidence > b.confidence;
                   });
  return result;
}

RemoteClassifier::RemoteClassifier(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {
  while (endpoint_.ends_with('/')) endpoint_.pop_back();
}

ClassificationResult RemoteClassifier::classify(std::string_view text) {
  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  const json body = {{"text", std::string(text)}};
  auto res = client.Post("/classify", body.dump(), "application/json");
  if (!res) {
    throw TransportError("classifier at " + endpoint_ + " unreachable: " +
                         httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("classifier at " + endpoint_ + " answered HTTP " +
                         std::to_string(res->status));
  }
  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("classifier sent invalid JSON: ") + e.what());
  }
  return classification_from_json(doc);
}

std::size_t CategoryIndex::categorized_count() const {
  return static_cast<std::size_t>(std::count_if(
      byTopic.begin(), byTopic.end(), [](const auto& kv) { return !kv.second.empty(); }));
}

std::size_t CategoryIndex::uncategorized_count() const {
  return byTopic.size() - categorized_count();
}

void CategoryIndex::add(const std::string& topic, std::set<std::string> categories) {
  for (const auto& c : categories) byCategory[c].insert(topic);
  byTopic[topic].merge(categories);
}

CategoryIndex build_category_index(const DialogueTree& tree, Classifier& classifier) {
  CategoryIndex index;
  for (const auto& node : tree.nodes()) {
    std::string all;
    for (const auto& [kind, list] : node.sentences) {
      for (const auto& s : list) {
        if (!all.empty()) all += ' ';
        all += s;
      }
    }
    if (count_tokens(all) == 0) {
      index.add(node.topicId, {});
      continue;
    }
    try {
      index.add(node.topicId, classifier.classify(pad_to_min_tokens(all)).categories());
    } catch (const TransportError& e) {
      throw IndexBuildError(node.topicId,
                            "classifying topic '" + node.topicId + "' failed: " + e.what());
    }
  }
  return index;
}

json index_to_json(const CategoryIndex& index) {
  json out = json::object();
  for (const auto& [topic, cats] : index.byTopic) out[topic] = cats;
  return out;
}

CategoryIndex index_from_json(const json& doc) {
  CategoryIndex index;
  try {
    for (const auto& [topic, cats] : doc.items()) {
      index.add(topic, cats.get<std::set<std::string>>());
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed category index: ") + e.what());
  }
  return index;
}

void attach_categories(DialogueTree& tree, const CategoryIndex& index) {
  for (auto& node : tree.mutable_nodes()) {
    auto it = index.byTopic.find(node.topicId);
    node.categories = it == index.byTopic.end() ? std::set<std::string>{} : it->second;
  }
}

std::vector<TopicOverlap> match_categories(const std::set<std::string>& categories,
                                           const CategoryIndex& index, const DialogueTree& tree,
                                           const std::vector<std::string>* candidates) {
  std::vector<TopicOverlap> out;
  if (categories.empty()) return out;
  auto score = [&](const std::string& topic) {
    auto it = index.byTopic.find(topic);
    if (it == index.byTopic.end()) return;
    std::size_t overlap = 0;
    for (const auto& c : it->second) overlap += categories.count(c);
    if (overlap > 0) out.push_back({topic, overlap});
  };
  if (candidates != nullptr) {
    std::set<std::string> unique(candidates->begin(), candidates->end());
    for (const auto& t : unique) score(t);
  } else {
    for (const auto& [topic, cats] : index.byTopic) score(topic);
  }
  auto depth = [&](const std::string& topic) {
    const TopicNode* node = tree.find(topic);
    return node == nullptr ? 0 : node->depth;
  };
  std::sort(out.begin(), out.end(), [&](const TopicOverlap& a, const TopicOverlap& b) {
    if (a.overlap != b.overlap) return a.overlap > b.overlap;
    const int da = depth(a.topicId), db = depth(b.topicId);
    if (da != db) return da < db;
    return a.topicId < b.topicId;
  });
  return out;
}

}  // namespace kgdialog
