#include <doctest.h>

#include <chrono>
#include <functional>
#include <map>

#include "kgdialog/dialogue_tree.hpp"
#include "kgdialog/errors.hpp"
#include "kgdialog/knowledge_base.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kgdialog;
using nlohmann::json;

namespace {

using kgtest::walk_oracle;
using kgtest::WalkCounts;

KnowledgeBase milk_tea_kb() {
  return kb_from_json(json::parse(R"({
    "cultures": ["EN"],
    "concepts": [
      {"id": "Beverage", "displayName": "drinks",
       "sentences": [{"text": "Do you like $hasName?", "kind": "yesno-question"}]},
      {"id": "Tea", "displayName": "tea", "parent": "Beverage", "topicLinks": ["Milk"],
       "keywords": [["tea*", "*"]],
       "sentences": [{"text": "I like $hasName with $hasTopic*hasName.", "kind": "positive-assertion"}]},
      {"id": "GreenTea", "displayName": "green tea", "parent": "Tea",
       "keywords": [["green", "tea*"]]},
      {"id": "Milk", "displayName": "milk", "parent": "Beverage",
       "likeliness": {"EN": "High"}}
    ]})"));
}

}  // namespace

TEST_CASE("fixture compiles to the walk-oracle node and sentence counts") {
  const json doc = kgtest::read_json(kgtest::fixture("beverages.kb.json"));
  const auto start = std::chrono::steady_clock::now();
  const DialogueTree tree = build_tree(kb_from_json(doc));
  const auto elapsed = std::chrono::steady_clock::now() - start;
  const WalkCounts oracle = walk_oracle(doc);
  CHECK(tree.size() == oracle.nodes);
  CHECK(tree.stats().sentenceCount == oracle.sentences);
  // Frozen values for the bundled fixture.
  CHECK(oracle.nodes == 62);
  CHECK(oracle.sentences == 413);
  CHECK(tree.stats().maxDepth == 4);
  CHECK(elapsed < std::chrono::seconds(1));
}

TEST_CASE("a template added at the root adds exactly one sentence per node") {
  json doc = kgtest::read_json(kgtest::fixture("beverages.kb.json"));
  const DialogueTree before = build_tree(kb_from_json(doc));
  doc["concepts"][0]["sentences"].push_back(
      {{"text", "Shall we chat about $hasName?"}, {"kind", "activity-proposal"}});
  const DialogueTree after = build_tree(kb_from_json(doc));
  CHECK(after.stats().sentenceCount - before.stats().sentenceCount == after.size());
  CHECK(after.stats().sentencesPerKind.at(SentenceKind::ActivityProposal) -
            before.stats().sentencesPerKind.at(SentenceKind::ActivityProposal) ==
        after.size());
}

TEST_CASE("Tea gets GreenTea and the Milk+Tea composite as its children") {
  const DialogueTree tree = build_tree(milk_tea_kb());
  CHECK(tree.at("Tea").children == std::vector<std::string>{"GreenTea", "Milk+Tea"});
  const TopicNode& mt = tree.at("Milk+Tea");
  CHECK(mt.displayName == "milk tea");
  CHECK(mt.parent == "Tea");
  CHECK(mt.depth == 2);
  CHECK(mt.is_leaf());
  CHECK(mt.fillerConceptId == "Milk");
  CHECK(mt.sourceConceptId == "Tea");
  CHECK(mt.keywordRules == std::vector<KeywordRule>{{"milk*", "tea*"}});
  CHECK(mt.likeliness.at("EN") == Likeliness::High);  // taken from the filler
  CHECK(mt.sentences.at(SentenceKind::PositiveAssertion) ==
        std::vector<std::string>{"I like milk tea with milk."});
  CHECK(mt.sentences.at(SentenceKind::YesNoQuestion) ==
        std::vector<std::string>{"Do you like milk tea?"});
  // Pre-order: Tea's subtree precedes its sibling Milk.
  std::vector<std::string> order;
  for (const auto& n : tree.nodes()) order.push_back(n.topicId);
  CHECK(order == std::vector<std::string>{"Beverage", "Tea", "GreenTea", "Milk+Tea", "Milk"});
}

TEST_CASE("templates are inherited downward and filler templates need a filler") {
  const DialogueTree tree = build_tree(milk_tea_kb());
  CHECK(tree.at("Tea").sentences.at(SentenceKind::PositiveAssertion) ==
        std::vector<std::string>{"I like tea with milk."});
  // GreenTea has no topic links, so the filler template yields nothing.
  CHECK_FALSE(tree.at("GreenTea").sentences.contains(SentenceKind::PositiveAssertion));
  CHECK(tree.at("GreenTea").sentences.at(SentenceKind::YesNoQuestion) ==
        std::vector<std::string>{"Do you like green tea?"});
  CHECK(tree.at("Beverage").sentence_count() == 1);
}

TEST_CASE("expand_template substitutes each placeholder once, without rescanning") {
  TopicNode node;
  node.displayName = "$hasTopic*hasName";  // adversarial display name
  node.fillerNames = {"milk", "lemon"};
  const SentenceTemplate t{"$hasName with $hasTopic*hasName", SentenceKind::PositiveAssertion,
                           Origin::Expert};
  CHECK(expand_template(t, node) ==
        std::vector<std::string>{"$hasTopic*hasName with milk", "$hasTopic*hasName with lemon"});
  const SentenceTemplate bad{"I like $colour", SentenceKind::PositiveAssertion, Origin::Expert};
  CHECK_THROWS_AS(expand_template(bad, node), ExpansionError);
}

TEST_CASE("Movie with its Actor filler expands the composite template") {
  const DialogueTree tree = build_tree(load_kb(kgtest::fixture("beverages.kb.json")));
  const auto& movie = tree.at("Movie").sentences.at(SentenceKind::PositiveAssertion);
  CHECK(std::find(movie.begin(), movie.end(), "I love movies with great actors.") != movie.end());
  CHECK(tree.at("Movie").children ==
        std::vector<std::string>{"Comedy", "Bollywood", "Actor", "Actor+Movie"});
}

TEST_CASE("compilation is deterministic and the dump is canonical") {
  const KnowledgeBase kb = load_kb(kgtest::fixture("beverages.kb.json"));
  const std::string a = tree_to_json(build_tree(kb)).dump();
  const std::string b = tree_to_json(build_tree(kb)).dump();
  CHECK(a == b);
  CHECK(tree_stats(build_tree(kb)) == build_tree(kb).stats());
}

TEST_CASE("depth and parent links are consistent") {
  const DialogueTree tree = build_tree(load_kb(kgtest::fixture("beverages.kb.json")));
  for (const auto& node : tree.nodes()) {
    if (!node.parent) {
      CHECK(node.topicId == tree.root_id());
      CHECK(node.depth == 0);
      continue;
    }
    const TopicNode& parent = tree.at(*node.parent);
    CHECK(node.depth == parent.depth + 1);
    CHECK(std::count(parent.children.begin(), parent.children.end(), node.topicId) == 1);
  }
}
