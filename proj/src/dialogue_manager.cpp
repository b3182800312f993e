#include "kgdialog/dialogue_manager.hpp"

#include <algorithm>
#include <fstream>

#include "kgdialog/errors.hpp"
#include "kgdialog/text.hpp"

namespace kgdialog {

using nlohmann::json;

namespace {

constexpr std::string_view kStrategyNames[] = {"keyword", "keyword-category", "random"};
constexpr std::string_view kPathNames[] = {"keyword-jump", "category-jump", "stay",
                                           "descend",      "random-jump",   "command"};

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& phrases) {
  std::vector<std::vector<std::string>> out;
  for (const auto& p : phrases) {
    auto tokens = tokenize(p);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

// Earliest position at which any of `phrases` occurs, or npos.
std::size_t earliest(const std::vector<std::string>& tokens,
                     const std::vector<std::vector<std::string>>& phrases) {
  std::size_t best = std::string::npos;
  for (const auto& p : phrases) best = std::min(best, find_phrase(tokens, p));
  return best;
}

}  // namespace

std::string_view to_string(Strategy strategy) {
  return kStrategyNames[static_cast<int>(strategy)];
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (int i = 0; i < 3; ++i) {
    if (kStrategyNames[i] == name) return static_cast<Strategy>(i);
  }
  return std::nullopt;
}

std::string_view to_string(SelectionPath path) { return kPathNames[static_cast<int>(path)]; }

std::optional<SelectionPath> parse_selection_path(std::string_view name) {
  for (int i = 0; i < 6; ++i) {
    if (kPathNames[i] == name) return static_cast<SelectionPath>(i);
  }
  return std::nullopt;
}

bool SessionState::operator==(const SessionState& other) const {
  return sessionId == other.sessionId && profile == other.profile &&
         currentTopicId == other.currentTopicId && usedSentences == other.usedSentences &&
         kindCursor == other.kindCursor && history == other.history &&
         rng.seed() == other.rng.seed() && rng.draws() == other.rng.draws() &&
         strategy == other.strategy && turnCount == other.turnCount && ratings == other.ratings;
}

json session_to_json(const SessionState& s) {
  json history = json::array();
  for (const auto& h : s.history) {
    json entry = {{"speaker", h.speaker}, {"text", h.text}, {"topic", h.topicId}};
    if (h.path) entry["selectionPath"] = to_string(*h.path);
    if (h.kind) entry["kind"] = to_string(*h.kind);
    history.push_back(std::move(entry));
  }
  json ratings = json::object();
  for (const auto& [turn, score] : s.ratings) ratings[std::to_string(turn)] = score;
  return {{"sessionId", s.sessionId},
          {"profile", profile_to_json(s.profile)},
          {"currentTopic", s.currentTopicId},
          {"usedSentences", s.usedSentences},
          {"kindCursor", s.kindCursor},
          {"history", history},
          {"rng", {{"seed", s.rng.seed()}, {"draws", s.rng.draws()}}},
          {"strategy", to_string(s.strategy)},
          {"turnCount", s.turnCount},
          {"ratings", ratings}};
}

SessionState session_from_json(const json& doc) {
  try {
    SessionState s;
    s.sessionId = doc.at("sessionId").get<std::string>();
    s.profile = profile_from_json(doc.at("profile"));
    s.currentTopicId = doc.at("currentTopic").get<std::string>();
    s.usedSentences = doc.at("usedSentences").get<std::map<std::string, std::set<std::string>>>();
    s.kindCursor = doc.at("kindCursor").get<std::map<std::string, std::size_t>>();
    for (const auto& h : doc.at("history")) {
      HistoryEntry entry{h.at("speaker").get<std::string>(), h.at("text").get<std::string>(),
                         h.at("topic").get<std::string>(), std::nullopt, std::nullopt};
      if (h.contains("selectionPath")) {
        entry.path = parse_selection_path(h.at("selectionPath").get<std::string>());
      }
      if (h.contains("kind")) entry.kind = parse_sentence_kind(h.at("kind").get<std::string>());
      s.history.push_back(std::move(entry));
    }
    s.rng = Rng(doc.at("rng").at("seed").get<std::uint64_t>(),
                doc.at("rng").at("draws").get<std::uint64_t>());
    auto strategy = parse_strategy(doc.at("strategy").get<std::string>());
    if (!strategy) throw ParseError("unknown strategy in session document");
    s.strategy = *strategy;
    s.turnCount = doc.at("turnCount").get<int>();
    const json ratings = doc.value("ratings", json::object());
    for (const auto& [turn, score] : ratings.items()) {
      s.ratings.emplace(std::stoi(turn), score.get<int>());
    }
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed session document: ") + e.what());
  }
}

PhraseCommandDetector::PhraseCommandDetector(
    std::vector<std::pair<std::string, std::string>> triggers) {
  for (auto& [phrase, activity] : triggers) {
    auto tokens = tokenize(phrase);
    if (!tokens.empty()) triggers_.emplace_back(std::move(tokens), std::move(activity));
  }
}

std::optional<std::string> PhraseCommandDetector::detect(std::string_view utterance) const {
  const auto tokens = tokenize(utterance);
  for (const auto& [phrase, activity] : triggers_) {
    if (find_phrase(tokens, phrase) != std::string::npos) return activity;
  }
  return std::nullopt;
}

Phrasebook default_phrasebook() {
  Phrasebook p;
  p.prefixes = {"You know...", "I heard that...", "Well...", "Let me tell you...",
                "By the way..."};
  p.affirmations = {"yes", "yeah", "sure", "of course", "i do"};
  p.negations = {"no", "not", "never", "i don't"};
  return p;
}

Phrasebook phrasebook_from_json(const json& doc) {
  try {
    Phrasebook p = default_phrasebook();
    p.prefixes = doc.value("prefixes", p.prefixes);
    p.affirmations = doc.value("affirmations", p.affirmations);
    p.negations = doc.value("negations", p.negations);
    p.commandAck = doc.value("commandAck", p.commandAck);
    const json commands = doc.value("commands", json::object());
    for (const auto& [phrase, activity] : commands.items()) {
      p.commands.emplace_back(phrase, activity.get<std::string>());
    }
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed phrasebook: ") + e.what());
  }
}

Phrasebook load_phrasebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open phrasebook '" + path.string() + "'");
  try {
    return phrasebook_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed phrasebook: ") + e.what());
  }
}

DialogueManager::DialogueManager(Assets assets) : assets_(std::move(assets)) {
  if (!assets_.tree) throw Error("dialogue manager needs a compiled tree");
  if (!assets_.commands) assets_.commands = std::make_shared<NullCommandDetector>();
}

bool DialogueManager::supports(Strategy strategy) const {
  return strategy != Strategy::KeywordCategory || (assets_.index && assets_.classifier);
}

SessionState DialogueManager::new_session(std::string session_id, PersonProfile profile,
                                          Strategy strategy, std::uint64_t seed) const {
  if (!supports(strategy)) {
    throw Error("strategy keyword-category needs a category index and a classifier");
  }
  SessionState s;
  s.sessionId = std::move(session_id);
  s.profile = std::move(profile);
  s.currentTopicId = tree().root_id();
  s.rng = Rng(seed);
  s.strategy = strategy;
  return s;
}

std::map<SentenceKind, std::vector<std::string>> DialogueManager::inventory(
    const SessionState& session, std::string_view topic_id) const {
  const TopicNode& node = tree().at(topic_id);
  auto pools = node.sentences;
  if (auto it = session.profile.taughtSentences.find(node.topicId);
      it != session.profile.taughtSentences.end()) {
    for (const auto& t : it->second) {
      auto expanded = expand_template(t, node);
      auto& pool = pools[t.kind];
      for (auto& s : expanded) {
        if (std::find(pool.begin(), pool.end(), s) == pool.end()) pool.push_back(std::move(s));
      }
    }
  }
  return pools;
}

Likeliness DialogueManager::topic_likeliness(const SessionState& session,
                                             std::string_view topic_id) const {
  const TopicNode& node = tree().at(topic_id);
  return effective_likeliness(node.topicId, node.likeliness, session.profile);
}

bool DialogueManager::topic_exhausted(const SessionState& session,
                                      std::string_view topic_id) const {
  const auto pools = inventory(session, topic_id);
  auto used_it = session.usedSentences.find(std::string(topic_id));
  if (used_it == session.usedSentences.end()) {
    return std::all_of(pools.begin(), pools.end(), [](const auto& kv) { return kv.second.empty(); });
  }
  const auto& used = used_it->second;
  for (const auto& [kind, pool] : pools) {
    if (pool.empty()) continue;
    const bool any_used = std::any_of(pool.begin(), pool.end(),
                                      [&](const std::string& s) { return used.contains(s); });
    if (!any_used) return false;
  }
  return true;
}

std::string DialogueManager::descend(SessionState& session, std::string_view topic_id) const {
  const TopicNode& node = tree().at(topic_id);
  if (node.children.empty()) throw Error("descend called on leaf topic '" + node.topicId + "'");
  std::vector<std::string> best;
  Likeliness best_level = Likeliness::VeryLow;
  for (const auto& child : node.children) {
    const Likeliness level = topic_likeliness(session, child);
    if (best.empty() || level > best_level) {
      best = {child};
      best_level = level;
    } else if (level == best_level) {
      best.push_back(child);
    }
  }
  return best.size() == 1 ? best.front() : best[session.rng.uniform_index(best.size())];
}

std::string DialogueManager::random_root_child(SessionState& session) const {
  const auto& children = tree().root().children;
  if (children.empty()) return tree().root_id();
  return children[session.rng.uniform_index(children.size())];
}

std::string DialogueManager::closest_to_root(SessionState& session,
                                             const std::vector<std::string>& topics) const {
  int best_depth = 0;
  std::vector<std::string> best;
  for (const auto& t : topics) {
    const int d = tree().at(t).depth;
    if (best.empty() || d < best_depth) {
      best = {t};
      best_depth = d;
    } else if (d == best_depth) {
      best.push_back(t);
    }
  }
  return best.size() == 1 ? best.front() : best[session.rng.uniform_index(best.size())];
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += (out.empty() ? "" : ",") + i;
  return out;
}

void note(std::vector<std::string>* decisions, std::string text) {
  if (decisions != nullptr) decisions->push_back(std::move(text));
}

}  // namespace

TopicChoice DialogueManager::select_topic_keyword(SessionState& session,
                                                  std::string_view utterance,
                                                  std::vector<std::string>* decisions) const {
  const auto matches = match_keywords(utterance, tree());
  note(decisions, "keywords=[" + join(matches) + "]");
  if (!matches.empty()) {
    return {matches[session.rng.uniform_index(matches.size())], SelectionPath::KeywordJump};
  }
  const auto& current = session.currentTopicId;
  if (!topic_exhausted(session, current)) {
    note(decisions, "topic-not-exhausted");
    return {current, SelectionPath::Stay};
  }
  note(decisions, "topic-exhausted");
  if (!tree().at(current).is_leaf()) return {descend(session, current), SelectionPath::Descend};
  note(decisions, "at-leaf");
  return {random_root_child(session), SelectionPath::RandomJump};
}

TopicChoice DialogueManager::select_topic_keyword_category(
    SessionState& session, std::string_view utterance, std::vector<std::string>* decisions) const {
  if (!supports(Strategy::KeywordCategory)) {
    throw Error("keyword-category selection needs a category index and a classifier");
  }
  const auto& index = *assets_.index;
  const auto keywords = match_keywords(utterance, tree());
  std::set<std::string> categories;
  if (count_tokens(utterance) > 0) {
    try {
      categories = assets_.classifier->classify(pad_to_min_tokens(utterance)).categories();
    } catch (const TransportError& e) {
      note(decisions, std::string("classifier-error=") + e.what());
    }
  }
  note(decisions, "keywords=[" + join(keywords) + "]");
  note(decisions,
       "categories=[" + join(std::vector<std::string>(categories.begin(), categories.end())) + "]");

  auto best_by_overlap = [&](const std::vector<TopicOverlap>& ranked) {
    std::vector<std::string> top;
    for (const auto& r : ranked) {
      if (r.overlap == ranked.front().overlap) top.push_back(r.topicId);
    }
    return closest_to_root(session, top);
  };

  if (!keywords.empty() && !categories.empty()) {
    const auto ranked = match_categories(categories, index, tree(), &keywords);
    if (!ranked.empty()) {
      note(decisions, "best-overlap=" + std::to_string(ranked.front().overlap));
      return {best_by_overlap(ranked), SelectionPath::CategoryJump};
    }
    note(decisions, "zero-overlap");
  }

  const auto& current = session.currentTopicId;
  if (!topic_exhausted(session, current)) {
    note(decisions, "topic-not-exhausted");
    return {current, SelectionPath::Stay};
  }
  note(decisions, "topic-exhausted");
  if (!tree().at(current).is_leaf()) return {descend(session, current), SelectionPath::Descend};
  note(decisions, "at-leaf");

  if (!categories.empty()) {
    const auto ranked = match_categories(categories, index, tree());
    if (!ranked.empty()) {
      note(decisions, "global-best-overlap=" + std::to_string(ranked.front().overlap));
      return {best_by_overlap(ranked), SelectionPath::CategoryJump};
    }
    note(decisions, "no-topic-shares-categories");
  } else if (!keywords.empty()) {
    return {closest_to_root(session, keywords), SelectionPath::KeywordJump};
  }
  return {random_root_child(session), SelectionPath::RandomJump};
}

std::string DialogueManager::select_topic_random(SessionState& session) const {
  const auto& nodes = tree().nodes();
  if (nodes.size() == 1) return nodes.front().topicId;
  // nodes() is pre-order, so the root is element 0.
  return nodes[1 + session.rng.uniform_index(nodes.size() - 1)].topicId;
}

ComposedSentence DialogueManager::compose_reply(SessionState& session,
                                                std::string_view topic_id) const {
  const auto pools = inventory(session, topic_id);
  auto& used = session.usedSentences[std::string(topic_id)];
  auto& cursor = session.kindCursor[std::string(topic_id)];
  constexpr std::size_t kKinds = std::size(kKindSequence);

  auto pool_of = [&](SentenceKind kind) -> const std::vector<std::string>* {
    auto it = pools.find(kind);
    return it == pools.end() || it->second.empty() ? nullptr : &it->second;
  };

  std::optional<std::size_t> slot;
  std::vector<std::string> candidates;
  for (std::size_t i = 0; i < kKinds && !slot; ++i) {
    const std::size_t s = (cursor + i) % kKinds;
    if (const auto* pool = pool_of(kKindSequence[s])) {
      for (const auto& text : *pool) {
        if (!used.contains(text)) candidates.push_back(text);
      }
      if (!candidates.empty()) slot = s;
    }
  }
  bool reused = false;
  if (!slot) {
    for (std::size_t i = 0; i < kKinds && !slot; ++i) {
      const std::size_t s = (cursor + i) % kKinds;
      if (const auto* pool = pool_of(kKindSequence[s])) {
        candidates = *pool;
        slot = s;
      }
    }
    if (!slot) throw CompositionError("topic '" + std::string(topic_id) + "' has no sentences");
    reused = true;
  }

  const SentenceKind kind = kKindSequence[*slot];
  cursor = (*slot + 1) % kKinds;
  std::string text = candidates[session.rng.uniform_index(candidates.size())];
  used.insert(text);
  if (is_assertion(kind) && !assets_.phrases.prefixes.empty() &&
      session.rng.chance(kPrefixProbability)) {
    const auto& prefixes = assets_.phrases.prefixes;
    text = prefixes[session.rng.uniform_index(prefixes.size())] + " " + text;
  }
  return {std::move(text), kind, reused};
}

std::optional<Likeliness> DialogueManager::update_profile_from_answer(
    SessionState& session, std::string_view utterance) const {
  auto last = std::find_if(session.history.rbegin(), session.history.rend(),
                           [](const HistoryEntry& h) { return h.speaker == "system"; });
  if (last == session.history.rend() || last->kind != SentenceKind::YesNoQuestion) {
    return std::nullopt;
  }
  const auto tokens = tokenize(utterance);
  const std::size_t yes = earliest(tokens, tokenize_all(assets_.phrases.affirmations));
  const std::size_t no = earliest(tokens, tokenize_all(assets_.phrases.negations));
  if (yes == no) return std::nullopt;  // both npos

  const std::string& topic = last->topicId;
  const Likeliness before = topic_likeliness(session, topic);
  const Likeliness after = yes < no ? raise(before) : lower(before);
  session.profile.likelinessOverrides[topic] = after;
  return after;
}

Reply DialogueManager::step(SessionState& session, std::string_view utterance) const {
  Reply reply;
  session.history.push_back(
      {"user", std::string(utterance), session.currentTopicId, std::nullopt, std::nullopt});

  if (auto level = update_profile_from_answer(session, utterance)) {
    reply.decisions.push_back("likeliness[" + session.currentTopicId +
                              "]=" + std::string(to_string(*level)));
  }

  if (auto activity = assets_.commands->detect(utterance)) {
    reply.text = assets_.phrases.commandAck;
    reply.topicId = session.currentTopicId;
    reply.selectionPath = SelectionPath::Command;
    reply.activity = *activity;
    reply.decisions.push_back("command=" + *activity);
  } else {
    TopicChoice choice;
    switch (session.strategy) {
      case Strategy::Keyword:
        choice = select_topic_keyword(session, utterance, &reply.decisions);
        break;
      case Strategy::KeywordCategory:
        choice = select_topic_keyword_category(session, utterance, &reply.decisions);
        break;
      case Strategy::Random:
        choice = {select_topic_random(session), SelectionPath::RandomJump};
        break;
    }
    auto composed = compose_reply(session, choice.topicId);
    if (composed.reused) reply.decisions.push_back("reused-sentence");
    reply.text = std::move(composed.text);
    reply.topicId = choice.topicId;
    reply.selectionPath = choice.path;
    reply.sentenceKind = composed.kind;
    reply.reused = composed.reused;
    session.currentTopicId = choice.topicId;
  }

  session.history.push_back(
      {"system", reply.text, reply.topicId, reply.selectionPath, reply.sentenceKind});
  ++session.turnCount;
  return reply;
}

json trace_line(const SessionState& session, std::string_view utterance, const Reply& reply) {
  json line = {{"session", session.sessionId},
               {"turn", session.turnCount},
               {"utterance", std::string(utterance)},
               {"strategy", to_string(session.strategy)},
               {"selectionPath", to_string(reply.selectionPath)},
               {"topic", reply.topicId},
               {"kind", reply.sentenceKind ? json(to_string(*reply.sentenceKind)) : json(nullptr)},
               {"text", reply.text},
               {"decisions", reply.decisions}};
  if (reply.reused) line["reused"] = true;
  if (reply.activity) line["activity"] = *reply.activity;
  return line;
}

}  // namespace kgdialog
