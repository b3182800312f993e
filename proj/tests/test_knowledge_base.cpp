#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "kgdialog/errors.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "test_support.hpp"

using namespace kgdialog;
using nlohmann::json;

namespace {

Concept concept_of(std::string id, std::optional<std::string> parent) {
  Concept c;
  c.id = std::move(id);
  c.displayName = c.id;
  c.parentId = std::move(parent);
  return c;
}

std::vector<std::string> rules_of(const std::vector<Diagnostic>& ds) {
  std::vector<std::string> out;
  for (const auto& d : ds) out.push_back(d.rule);
  return out;
}

long count_rule(const std::vector<Diagnostic>& ds, const std::string& rule) {
  return std::count_if(ds.begin(), ds.end(), [&](const Diagnostic& d) { return d.rule == rule; });
}

bool has_rule(const std::vector<Diagnostic>& ds, const std::string& rule,
              const std::string& concept_id) {
  return std::any_of(ds.begin(), ds.end(), [&](const Diagnostic& d) {
    return d.rule == rule && d.conceptId == concept_id;
  });
}

}  // namespace

TEST_CASE("bundled fixture loads with no diagnostics") {
  const KnowledgeBase kb = load_kb(kgtest::fixture("beverages.kb.json"));
  CHECK(validate_kb(kb.concepts()).empty());
  CHECK(kb.concepts().size() == 50);
  CHECK(kb.root().id == "EverydayLife");
  CHECK(kb.children_of("EverydayLife").size() >= 3);
  const Concept& tea = kb.at("Tea");
  CHECK(tea.topicLinks == std::vector<std::string>{"Milk", "Lemon"});
  CHECK(kb.at("GreenTea").parentId == "Tea");
  std::size_t links = 0;
  for (const auto& c : kb.concepts()) links += c.topicLinks.size();
  CHECK(links == 12);
}

TEST_CASE("a three-concept subclass cycle is reported exactly once") {
  std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("A", "C"),
                             concept_of("B", "A"), concept_of("C", "B")};
  const auto ds = validate_kb(cs);
  REQUIRE(count_rule(ds, "cycle") == 1);
  const auto it = std::find_if(ds.begin(), ds.end(), [](auto& d) { return d.rule == "cycle"; });
  CHECK(it->message.find("A, B, C") != std::string::npos);
}

TEST_CASE("every structural rule has its own diagnostic") {
  SUBCASE("dangling topic link names the source concept") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Tea", "Root")};
    cs[1].topicLinks = {"Sugar"};
    const auto ds = validate_kb(cs);
    CHECK(has_rule(ds, "dangling-topic-link", "Tea"));
  }
  SUBCASE("missing parent") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Tea", "Drinks")};
    CHECK(has_rule(validate_kb(cs), "missing-parent", "Tea"));
  }
  SUBCASE("duplicate id") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Tea", "Root"),
                               concept_of("Tea", "Root")};
    CHECK(has_rule(validate_kb(cs), "duplicate-id", "Tea"));
  }
  SUBCASE("reserved plus sign") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Milk+Tea", "Root")};
    CHECK(has_rule(validate_kb(cs), "reserved-character", "Milk+Tea"));
  }
  SUBCASE("self link, duplicate link") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Tea", "Root"),
                               concept_of("Milk", "Root")};
    cs[1].topicLinks = {"Tea", "Milk", "Milk"};
    const auto ds = validate_kb(cs);
    CHECK(has_rule(ds, "self-topic-link", "Tea"));
    CHECK(has_rule(ds, "duplicate-topic-link", "Tea"));
  }
  SUBCASE("templates") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt)};
    cs[0].templates = {{"", SentenceKind::OpenQuestion, Origin::Expert},
                       {"I like $hasColour", SentenceKind::PositiveAssertion, Origin::Expert},
                       {"I like $hasName with $hasTopic*hasName", SentenceKind::PositiveAssertion,
                        Origin::Expert}};
    const auto ds = validate_kb(cs);
    CHECK(rules_of(ds) == std::vector<std::string>{"empty-template", "bad-placeholder"});
  }
  SUBCASE("keyword patterns") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt)};
    cs[0].keywordRules = {{"*", "*"}, {"Tea", "*"}, {"te*a", "*"}, {"tea*", "*"}, {"**", "x"}};
    CHECK(rules_of(validate_kb(cs)) ==
          std::vector<std::string>{"double-wildcard", "bad-pattern", "bad-pattern", "bad-pattern"});
  }
  SUBCASE("roots") {
    std::vector<Concept> two = {concept_of("A", std::nullopt), concept_of("B", std::nullopt)};
    CHECK(has_rule(validate_kb(two), "multiple-roots", "B"));
    std::vector<Concept> none = {concept_of("A", "B"), concept_of("B", "A")};
    const auto ds = validate_kb(none);
    CHECK(has_rule(ds, "no-root", ""));
    CHECK(count_rule(ds, "cycle") == 1);
  }
  SUBCASE("empty id") {
    std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("", "Root")};
    CHECK(has_rule(validate_kb(cs), "empty-id", ""));
  }
}

TEST_CASE("constructor rejects an invalid KB naming the first offending concept") {
  std::vector<Concept> cs = {concept_of("Root", std::nullopt), concept_of("Tea", "Root")};
  cs[1].topicLinks = {"Sugar"};
  try {
    KnowledgeBase kb({"EN"}, cs);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.subject() == "Tea");
    CHECK(std::string(e.what()).find("Sugar") != std::string::npos);
  }
}

TEST_CASE("malformed JSON and wrong types raise ParseError") {
  std::istringstream broken("{\"concepts\": [");
  CHECK_THROWS_AS(load_kb(broken), ParseError);
  CHECK_THROWS_AS(kb_from_json(json::parse(R"({"concepts": [{"id": 3}]})")), ParseError);
  CHECK_THROWS_AS(kb_from_json(json::parse(R"({"concepts": [{"id": "A", "keywords": [["a"]]}]})")),
                  ParseError);
  CHECK_THROWS_AS(
      kb_from_json(json::parse(R"({"concepts": [{"id": "A", "likeliness": {"EN": "Huge"}}]})")),
      ParseError);
  CHECK_THROWS_AS(kb_from_json(json::parse(
                      R"({"concepts": [{"id": "A", "sentences": [{"text": "x", "kind": "rant"}]}]})")),
                  ParseError);
  CHECK_THROWS_AS(load_kb(std::filesystem::path("/nonexistent/kb.json")), ParseError);
}

TEST_CASE("JSON round trip is lossless") {
  const KnowledgeBase kb = load_kb(kgtest::fixture("beverages.kb.json"));
  const KnowledgeBase again = kb_from_json(kb_to_json(kb));
  CHECK(again == kb);
  CHECK(kb_to_json(again) == kb_to_json(kb));
}

TEST_CASE("likeliness levels parse in several spellings and saturate") {
  CHECK(parse_likeliness("Very High") == Likeliness::VeryHigh);
  CHECK(parse_likeliness("very-low") == Likeliness::VeryLow);
  CHECK(parse_likeliness("Medium") == Likeliness::Medium);
  CHECK_FALSE(parse_likeliness("Huge").has_value());
  CHECK(raise(Likeliness::VeryHigh) == Likeliness::VeryHigh);
  CHECK(lower(Likeliness::VeryLow) == Likeliness::VeryLow);
  CHECK(raise(Likeliness::Medium) == Likeliness::High);
  CHECK(Likeliness::VeryLow < Likeliness::Low);
  CHECK(Likeliness::High < Likeliness::VeryHigh);
}

TEST_CASE("effective likeliness: override, else culture default, else Medium") {
  const KnowledgeBase kb = load_kb(kgtest::fixture("beverages.kb.json"));
  PersonProfile en = kgtest::profile("u", "EN");
  CHECK(effective_likeliness(kb.at("Tea"), en) == Likeliness::High);
  CHECK(effective_likeliness(kb.at("Coffee"), en) == Likeliness::Low);
  PersonProfile it = kgtest::profile("u", "IT");
  CHECK(effective_likeliness(kb.at("Tea"), it) == Likeliness::Low);
  CHECK(effective_likeliness(kb.at("Coffee"), it) == Likeliness::High);
  PersonProfile jp = kgtest::profile("u", "JP");
  CHECK(effective_likeliness(kb.at("Tea"), jp) == Likeliness::Medium);
  en.likelinessOverrides["Tea"] = Likeliness::VeryLow;
  CHECK(effective_likeliness(kb.at("Tea"), en) == Likeliness::VeryLow);
}

TEST_CASE("profiles round-trip and validate against the KB") {
  const KnowledgeBase kb = load_kb(kgtest::fixture("beverages.kb.json"));
  const PersonProfile dorothy = load_profile(kgtest::fixture("dorothy.profile.json"));
  CHECK(dorothy.userId == "dorothy");
  REQUIRE(dorothy.taughtSentences.at("Tea").size() == 1);
  CHECK(dorothy.taughtSentences.at("Tea")[0].origin == Origin::UserTaught);
  CHECK(validate_profile(dorothy, kb).empty());
  CHECK(profile_from_json(profile_to_json(dorothy)) == dorothy);

  PersonProfile bad = dorothy;
  bad.likelinessOverrides["Sugar"] = Likeliness::High;
  bad.likelinessOverrides["Milk+Tea"] = Likeliness::High;   // valid composite
  bad.likelinessOverrides["Sugar+Tea"] = Likeliness::High;  // not a link of Tea
  const auto ds = validate_profile(bad, kb);
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].conceptId == "Sugar");
  CHECK(ds[1].conceptId == "Sugar+Tea");
}
