#include "kgdialog/knowledge_base.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "kgdialog/errors.hpp"

namespace kgdialog {

using nlohmann::json;

namespace {

constexpr std::string_view kKindNames[] = {
    "yesno-question", "positive-assertion", "activity-proposal", "open-question",
    "negative-assertion",
};

constexpr std::string_view kLikelinessNames[] = {"VeryLow", "Low", "Medium", "High",
                                                 "VeryHigh"};

std::string squash(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == ' ' || c == '-' || c == '_') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::string_view to_string(SentenceKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<SentenceKind> parse_sentence_kind(std::string_view name) {
  for (SentenceKind kind : kAllKinds) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

bool is_assertion(SentenceKind kind) {
  return kind == SentenceKind::PositiveAssertion || kind == SentenceKind::NegativeAssertion;
}

bool is_question(SentenceKind kind) {
  return kind == SentenceKind::YesNoQuestion || kind == SentenceKind::OpenQuestion;
}

std::string_view to_string(Origin origin) {
  return origin == Origin::Expert ? "expert" : "user-taught";
}

std::optional<Origin> parse_origin(std::string_view name) {
  if (name == "expert") return Origin::Expert;
  if (name == "user-taught") return Origin::UserTaught;
  return std::nullopt;
}

std::string_view to_string(Likeliness level) {
  return kLikelinessNames[static_cast<int>(level)];
}

std::optional<Likeliness> parse_likeliness(std::string_view name) {
  const std::string key = squash(name);
  for (int i = 0; i < 5; ++i) {
    if (squash(kLikelinessNames[i]) == key) return static_cast<Likeliness>(i);
  }
  return std::nullopt;
}

Likeliness raise(Likeliness level) {
  return level == Likeliness::VeryHigh ? level
                                       : static_cast<Likeliness>(static_cast<int>(level) + 1);
}

Likeliness lower(Likeliness level) {
  return level == Likeliness::VeryLow ? level
                                      : static_cast<Likeliness>(static_cast<int>(level) - 1);
}

bool SentenceTemplate::uses_filler() const {
  return text.find(kFillerPlaceholder) != std::string::npos;
}

bool is_valid_placeholder_text(std::string_view text) {
  for (std::size_t pos = text.find('$'); pos != std::string_view::npos;
       pos = text.find('$', pos + 1)) {
    const std::string_view rest = text.substr(pos);
    if (rest.starts_with(kFillerPlaceholder)) {
      pos += kFillerPlaceholder.size() - 1;
    } else if (rest.starts_with(kNamePlaceholder)) {
      pos += kNamePlaceholder.size() - 1;
    } else {
      return false;
    }
  }
  return true;
}

bool is_valid_pattern(std::string_view pattern) {
  if (pattern.empty()) return false;
  if (pattern == "*") return true;
  const std::string_view body =
      pattern.back() == '*' ? pattern.substr(0, pattern.size() - 1) : pattern;
  if (body.empty()) return false;
  return std::all_of(body.begin(), body.end(), [](char c) {
    return (std::isalnum(static_cast<unsigned char>(c)) != 0 &&
            std::tolower(static_cast<unsigned char>(c)) == c) ||
           c == '\'';
  });
}

std::vector<Diagnostic> validate_kb(const std::vector<Concept>& concepts) {
  std::vector<Diagnostic> out;
  std::unordered_map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const Concept& c = concepts[i];
    if (c.id.empty()) {
      out.push_back({c.id, "empty-id", "concept #" + std::to_string(i) + " has an empty id"});
      continue;
    }
    if (c.id.find('+') != std::string::npos) {
      out.push_back({c.id, "reserved-character",
                     "id '" + c.id + "' contains '+', reserved for composite topics"});
    }
    if (!first_seen.emplace(c.id, i).second) {
      out.push_back({c.id, "duplicate-id", "id '" + c.id + "' is declared more than once"});
    }
  }

  std::vector<std::string> roots;
  for (const Concept& c : concepts) {
    if (c.id.empty()) continue;
    if (!c.parentId) {
      roots.push_back(c.id);
    } else if (!first_seen.contains(*c.parentId)) {
      out.push_back({c.id, "missing-parent",
                     "parent '" + *c.parentId + "' of '" + c.id + "' does not exist"});
    }
    std::set<std::string> links;
    for (const std::string& link : c.topicLinks) {
      if (link == c.id) {
        out.push_back({c.id, "self-topic-link", "'" + c.id + "' lists itself as a topic"});
      } else if (!first_seen.contains(link)) {
        out.push_back({c.id, "dangling-topic-link",
                       "topic link '" + link + "' of '" + c.id + "' does not exist"});
      } else if (!links.insert(link).second) {
        out.push_back({c.id, "duplicate-topic-link",
                       "topic link '" + link + "' repeated in '" + c.id + "'"});
      }
    }
    for (const SentenceTemplate& t : c.templates) {
      if (t.text.empty()) {
        out.push_back({c.id, "empty-template", "empty sentence in '" + c.id + "'"});
      } else if (!is_valid_placeholder_text(t.text)) {
        out.push_back({c.id, "bad-placeholder",
                       "unrecognized placeholder in '" + t.text + "' of '" + c.id + "'"});
      }
    }
    for (const KeywordRule& r : c.keywordRules) {
      if (!is_valid_pattern(r.first) || !is_valid_pattern(r.second)) {
        out.push_back({c.id, "bad-pattern",
                       "malformed keyword pattern (" + r.first + ", " + r.second + ") in '" +
                           c.id + "'"});
      } else if (r.first == "*" && r.second == "*") {
        out.push_back({c.id, "double-wildcard",
                       "keyword rule of two lone wildcards in '" + c.id + "'"});
      }
    }
  }

  if (!concepts.empty() && roots.empty()) {
    out.push_back({"", "no-root", "no concept without a parent"});
  }
  for (std::size_t i = 1; i < roots.size(); ++i) {
    out.push_back({roots[i], "multiple-roots",
                   "'" + roots[i] + "' has no parent but '" + roots[0] + "' is already the root"});
  }

  // Parent chains: walk upward from every concept; a revisit inside the same
  // walk is a cycle. Each cycle is reported once, by its member set.
  std::set<std::set<std::string>> cycles;
  for (const Concept& start : concepts) {
    std::vector<std::string> path;
    std::unordered_map<std::string, std::size_t> on_path;
    const Concept* cur = &start;
    while (cur != nullptr && !cur->id.empty()) {
      if (auto it = on_path.find(cur->id); it != on_path.end()) {
        cycles.insert(std::set<std::string>(path.begin() + static_cast<long>(it->second),
                                            path.end()));
        break;
      }
      on_path.emplace(cur->id, path.size());
      path.push_back(cur->id);
      if (!cur->parentId) break;
      auto parent = first_seen.find(*cur->parentId);
      cur = parent == first_seen.end() ? nullptr : &concepts[parent->second];
    }
  }
  for (const auto& members : cycles) {
    std::string list;
    for (const auto& m : members) list += (list.empty() ? "" : ", ") + m;
    out.push_back({*members.begin(), "cycle", "subclass cycle through {" + list + "}"});
  }
  return out;
}

KnowledgeBase::KnowledgeBase(std::vector<std::string> cultures, std::vector<Concept> concepts)
    : cultures_(std::move(cultures)), concepts_(std::move(concepts)) {
  if (concepts_.empty()) throw ValidationError("", "knowledge base has no concepts");
  auto diagnostics = validate_kb(concepts_);
  if (!diagnostics.empty()) {
    std::string message;
    for (const auto& d : diagnostics) message += d.rule + ": " + d.message + "\n";
    throw ValidationError(diagnostics.front().conceptId, message);
  }
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    by_id_.emplace(concepts_[i].id, i);
    if (concepts_[i].parentId) {
      children_[*concepts_[i].parentId].push_back(i);
    } else {
      root_ = i;
    }
  }
}

const Concept* KnowledgeBase::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &concepts_[it->second];
}

const Concept& KnowledgeBase::at(std::string_view id) const {
  const Concept* c = find(id);
  if (c == nullptr) throw ValidationError(std::string(id), "unknown concept '" + std::string(id) + "'");
  return *c;
}

const std::vector<std::size_t>& KnowledgeBase::children_of(std::string_view id) const {
  static const std::vector<std::size_t> kNone;
  auto it = children_.find(std::string(id));
  return it == children_.end() ? kNone : it->second;
}

namespace {

SentenceTemplate template_from_json(const json& j, Origin default_origin) {
  SentenceTemplate t;
  t.text = j.at("text").get<std::string>();
  const auto kind_name = j.value("kind", std::string("positive-assertion"));
  auto kind = parse_sentence_kind(kind_name);
  if (!kind) throw ParseError("unknown sentence kind '" + kind_name + "'");
  t.kind = *kind;
  t.origin = default_origin;
  if (j.contains("origin")) {
    const auto origin_name = j.at("origin").get<std::string>();
    auto origin = parse_origin(origin_name);
    if (!origin) throw ParseError("unknown sentence origin '" + origin_name + "'");
    t.origin = *origin;
  }
  return t;
}

json template_to_json(const SentenceTemplate& t) {
  return {{"text", t.text}, {"kind", to_string(t.kind)}, {"origin", to_string(t.origin)}};
}

std::map<std::string, Likeliness> likeliness_from_json(const json& j) {
  std::map<std::string, Likeliness> out;
  for (const auto& [key, value] : j.items()) {
    const auto name = value.get<std::string>();
    auto level = parse_likeliness(name);
    if (!level) throw ParseError("unknown likeliness level '" + name + "'");
    out.emplace(key, *level);
  }
  return out;
}

json likeliness_to_json(const std::map<std::string, Likeliness>& levels) {
  json out = json::object();
  for (const auto& [key, level] : levels) out[key] = to_string(level);
  return out;
}

template <typename Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

}  // namespace

KnowledgeBase kb_from_json(const json& doc) {
  auto [cultures, concepts] = guarded([&] {
    if (!doc.is_object()) throw ParseError("knowledge base must be a JSON object");
    std::vector<std::string> cultures = doc.value("cultures", std::vector<std::string>{});
    std::vector<Concept> concepts;
    for (const json& jc : doc.at("concepts")) {
      Concept c;
      c.id = jc.at("id").get<std::string>();
      c.displayName = jc.value("displayName", c.id);
      if (jc.contains("parent") && !jc.at("parent").is_null()) {
        c.parentId = jc.at("parent").get<std::string>();
      }
      c.topicLinks = jc.value("topicLinks", std::vector<std::string>{});
      if (jc.contains("likeliness")) c.likeliness = likeliness_from_json(jc.at("likeliness"));
      for (const json& rule : jc.value("keywords", json::array())) {
        if (!rule.is_array() || rule.size() != 2) {
          throw ParseError("keyword rule of '" + c.id + "' must be a pair");
        }
        c.keywordRules.push_back({rule[0].get<std::string>(), rule[1].get<std::string>()});
      }
      for (const json& s : jc.value("sentences", json::array())) {
        c.templates.push_back(template_from_json(s, Origin::Expert));
      }
      concepts.push_back(std::move(c));
    }
    return std::pair{std::move(cultures), std::move(concepts)};
  });
  return KnowledgeBase(std::move(cultures), std::move(concepts));
}

json kb_to_json(const KnowledgeBase& kb) {
  json concepts = json::array();
  for (const Concept& c : kb.concepts()) {
    json jc;
    jc["id"] = c.id;
    jc["displayName"] = c.displayName;
    jc["parent"] = c.parentId ? json(*c.parentId) : json(nullptr);
    jc["topicLinks"] = c.topicLinks;
    jc["likeliness"] = likeliness_to_json(c.likeliness);
    json rules = json::array();
    for (const auto& r : c.keywordRules) rules.push_back({r.first, r.second});
    jc["keywords"] = rules;
    json sentences = json::array();
    for (const auto& t : c.templates) sentences.push_back(template_to_json(t));
    jc["sentences"] = sentences;
    concepts.push_back(std::move(jc));
  }
  return {{"cultures", kb.cultures()}, {"concepts", concepts}};
}

KnowledgeBase load_kb(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed knowledge base: ") + e.what());
  }
  return kb_from_json(doc);
}

KnowledgeBase load_kb(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open knowledge base '" + path.string() + "'");
  return load_kb(in);
}

void save_kb(const KnowledgeBase& kb, std::ostream& out) { out << kb_to_json(kb).dump(2) << '\n'; }

PersonProfile profile_from_json(const json& doc) {
  return guarded([&] {
    PersonProfile p;
    p.userId = doc.at("userId").get<std::string>();
    p.culture = doc.value("culture", std::string());
    if (doc.contains("overrides")) p.likelinessOverrides = likeliness_from_json(doc.at("overrides"));
    if (doc.contains("taught")) {
      for (const auto& [concept_id, list] : doc.at("taught").items()) {
        auto& out = p.taughtSentences[concept_id];
        for (const json& s : list) {
          auto t = s.is_string() ? SentenceTemplate{s.get<std::string>(),
                                                    SentenceKind::PositiveAssertion,
                                                    Origin::UserTaught}
                                 : template_from_json(s, Origin::UserTaught);
          t.origin = Origin::UserTaught;
          out.push_back(std::move(t));
        }
      }
    }
    p.facts = doc.value("facts", std::map<std::string, std::string>{});
    return p;
  });
}

json profile_to_json(const PersonProfile& profile) {
  json taught = json::object();
  for (const auto& [concept_id, list] : profile.taughtSentences) {
    json arr = json::array();
    for (const auto& t : list) arr.push_back(template_to_json(t));
    taught[concept_id] = arr;
  }
  return {{"userId", profile.userId},
          {"culture", profile.culture},
          {"overrides", likeliness_to_json(profile.likelinessOverrides)},
          {"taught", taught},
          {"facts", profile.facts}};
}

PersonProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile '" + path.string() + "'");
  try {
    return profile_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed profile: ") + e.what());
  }
}

namespace {

bool is_topic_key(std::string_view key, const KnowledgeBase& kb) {
  if (kb.find(key) != nullptr) return true;
  const auto plus = key.find('+');
  if (plus == std::string_view::npos) return false;
  const Concept* source = kb.find(key.substr(plus + 1));
  if (source == nullptr) return false;
  const auto filler = key.substr(0, plus);
  return std::find(source->topicLinks.begin(), source->topicLinks.end(), filler) !=
         source->topicLinks.end();
}

}  // namespace

std::vector<Diagnostic> validate_profile(const PersonProfile& profile, const KnowledgeBase& kb) {
  std::vector<Diagnostic> out;
  for (const auto& [key, level] : profile.likelinessOverrides) {
    if (!is_topic_key(key, kb)) {
      out.push_back({key, "unknown-topic", "override for unknown topic '" + key + "'"});
    }
  }
  for (const auto& [key, list] : profile.taughtSentences) {
    if (!is_topic_key(key, kb)) {
      out.push_back({key, "unknown-topic", "taught sentences for unknown topic '" + key + "'"});
    }
    for (const auto& t : list) {
      if (t.text.empty() || !is_valid_placeholder_text(t.text)) {
        out.push_back({key, "bad-template", "invalid taught sentence '" + t.text + "'"});
      }
    }
  }
  return out;
}

Likeliness effective_likeliness(std::string_view key,
                                const std::map<std::string, Likeliness>& culture_defaults,
                                const PersonProfile& profile) {
  if (auto it = profile.likelinessOverrides.find(std::string(key));
      it != profile.likelinessOverrides.end()) {
    return it->second;
  }
  if (auto it = culture_defaults.find(profile.culture); it != culture_defaults.end()) {
    return it->second;
  }
  return Likeliness::Medium;
}

Likeliness effective_likeliness(const Concept& source, const PersonProfile& profile) {
  return effective_likeliness(source.id, source.likeliness, profile);
}

}  // namespace kgdialog
