#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "skg/errors.hpp"
#include "skg/graphs.hpp"
#include "skg/rng.hpp"

using namespace skg;

namespace {

const std::vector<std::string> kConcepts = {"bottle", "alcohol", "container", "car",   "eggs", "road",
                                            "red",    "glass",   "drink",     "party", "ice",  "cold",
                                            "metal",  "wheel",   "food",      "farm",  "bird", "animal"};
const std::vector<std::string> kRelations = {"RelatedTo", "IsA",     "HasA",       "AtLocation", "UsedFor",
                                             "Synonym",   "Antonym", "HasProperty", "PartOf",    "ExternalURL"};

// Surface variants that normalize to the same concept.
std::string variant(const std::string& c, Rng& rng) {
  switch (rng.below(3)) {
    case 0:
      return c;
    case 1:
      return " " + c + " ";
    default: {
      std::string u = c;
      u[0] = static_cast<char>(std::toupper(u[0]));
      return u;
    }
  }
}

std::vector<Fact> random_facts(std::size_t n, Rng& rng) {
  std::vector<Fact> facts;
  for (std::size_t i = 0; i < n; ++i)
    facts.push_back({kRelations[rng.below(kRelations.size())], kConcepts[rng.below(kConcepts.size())],
                     kConcepts[rng.below(kConcepts.size())]});
  return facts;
}

std::vector<GraphNode> random_seeds(Rng& rng) {
  std::vector<GraphNode> seeds;
  const std::size_t n = 1 + rng.below(4);
  for (std::size_t i = 0; i < n; ++i) {
    GraphNode node{variant(kConcepts[rng.below(kConcepts.size())], rng), {}};
    if (rng.bernoulli(0.5)) node.attributes.push_back(kConcepts[rng.below(kConcepts.size())]);
    seeds.push_back(node);
  }
  return seeds;
}

Vocabulary random_vocab(Rng& rng) {
  Vocabulary v;
  for (const auto& c : kConcepts)
    if (rng.bernoulli(0.6)) v.insert(c);
  return v;
}

}  // namespace

TEST_SUITE("scene graphs") {
  TEST_CASE("eggs sit in the car") {
    const auto doc = parse_scene_graph_text(
        R"({"image_id": "ad1", "objects": [{"name": "car"}, {"name": "eggs"}],
            "relations": [{"subj": 1, "pred": "sit in", "obj": 0}], "labels": ["safety"]})");
    CHECK(doc.image_id == "ad1");
    CHECK(doc.graph.nodes.size() == 2);
    REQUIRE(doc.graph.edges.size() == 1);
    CHECK(doc.graph.edges[0] == GraphEdge{1, 0, "sit in"});
    CHECK(doc.labels == std::vector<std::string>{"safety"});
  }

  TEST_CASE("empty object list is accepted") {
    const auto doc = parse_scene_graph_text(R"({"objects": [], "relations": []})");
    CHECK(doc.graph.nodes.empty());
    CHECK(doc.graph.edges.empty());
  }

  TEST_CASE("schema errors carry a path") {
    auto path_of = [](const char* text) {
      try {
        parse_scene_graph_text(text, "img.json");
      } catch (const SchemaError& e) {
        return e.path();
      }
      return std::string("no error");
    };
    CHECK(path_of(R"({"objects": [{"name": "a"}, {"name": "b"}], "relations": [{"subj": 5, "pred": "on", "obj": 0}]})") ==
          "img.json.relations[0].subj");
    CHECK(path_of(R"({"objects": [{"name": "a"}], "colour": 1})") == "img.json.colour");
    CHECK(path_of(R"({"objects": [{"attributes": ["red"]}]})") == "img.json.objects[0].name");
    CHECK(path_of(R"({"objects": [{"name": "  "}]})") == "img.json.objects[0].name");
  }

  TEST_CASE("scene node order is kept and duplicate edges collapse") {
    LabeledGraph g;
    g.nodes = {{"b", {}}, {"a", {}}};
    g.edges = {{0, 1, "On"}, {0, 1, "on"}, {1, 0, "on"}};
    const LabeledGraph c = validate_graph(g);
    CHECK(c.nodes[0].object == "b");
    CHECK(c.nodes[1].object == "a");
    CHECK(c.edges == std::vector<GraphEdge>{{0, 1, "on"}, {1, 0, "on"}});
  }

  TEST_CASE("out-of-range edge is a validation error") {
    LabeledGraph g;
    g.nodes = {{"a", {}}};
    g.edges = {{0, 3, "on"}};
    CHECK_THROWS_AS(validate_graph(g), ValidationError);
  }

  TEST_CASE("json round trip is canonical") {
    LabeledGraph g;
    g.kind = GraphKind::Knowledge;
    g.nodes = {{"Car", {}}, {" car ", {}}, {"road", {}}};
    g.edges = {{0, 2, "AtLocation"}, {1, 2, "AtLocation"}};
    const LabeledGraph c = validate_graph(g);
    CHECK(c.nodes.size() == 2);
    CHECK(c.edges.size() == 1);
    CHECK(graph_from_json(graph_to_json(c), GraphKind::Knowledge) == c);
    CHECK(canonical_string(validate_graph(c)) == canonical_string(c));
  }
}

TEST_SUITE("knowledge graphs") {
  const auto whitelist = RelationWhitelist::defaults();

  TEST_CASE("default whitelist is the twenty relations") {
    CHECK(whitelist.allowed().size() == 20);
    for (const char* r : {"RelatedTo", "IsA", "HasA", "PartOf", "MadeOf", "FormOf", "AtLocation", "Causes",
                          "HasProperty", "HasFirstSubevent", "HasPrerequisite", "HasSubevent", "UsedFor", "CapableOf",
                          "DefinedAs", "SimilarTo", "CausesDesire", "Desires", "MotivatedByGoal", "DerivedFrom"})
      CHECK(whitelist.contains(r));
    CHECK_FALSE(whitelist.contains("Synonym"));
  }

  TEST_CASE("bottle facts") {
    const FactStore store({{"RelatedTo", "bottle", "alcohol"}, {"IsA", "bottle", "container"}});
    const std::vector<GraphNode> seeds{{"bottle", {}}};
    const LabeledGraph g = build_knowledge_graph(seeds, store, whitelist, {"alcohol", "container"});
    REQUIRE(g.nodes.size() == 3);
    CHECK(g.nodes[0].object == "alcohol");
    CHECK(g.nodes[1].object == "bottle");
    CHECK(g.nodes[2].object == "container");
    CHECK(g.edges == std::vector<GraphEdge>{{1, 0, "RelatedTo"}, {1, 2, "IsA"}});
  }

  TEST_CASE("non-whitelisted relation is dropped") {
    const FactStore store({{"Synonym", "bottle", "flask"}});
    const std::vector<GraphNode> seeds{{"bottle", {}}};
    const LabeledGraph g = build_knowledge_graph(seeds, store, whitelist, {"flask"});
    REQUIRE(g.nodes.size() == 1);
    CHECK(g.nodes[0].object == "bottle");
    CHECK(g.edges.empty());
  }

  TEST_CASE("tail outside the vocabulary is dropped; attributes seed too") {
    const FactStore store({{"HasProperty", "ice", "cold"}, {"IsA", "red", "colour"}, {"RelatedTo", "ice", "cube"}});
    const std::vector<GraphNode> seeds{{"glass", {"ice"}}, {"Red", {}}};
    const LabeledGraph g = build_knowledge_graph(seeds, store, whitelist, {"cold"});
    std::vector<std::string> tokens;
    for (const auto& n : g.nodes) tokens.push_back(n.object);
    CHECK(tokens == std::vector<std::string>{"cold", "glass", "ice", "red"});
    CHECK(g.edges.size() == 1);
  }

  TEST_CASE("match_tail admits facts with the seed as tail") {
    const FactStore store({{"RelatedTo", "animal", "bird"}});
    const std::vector<GraphNode> seeds{{"bird", {}}};
    CHECK(build_knowledge_graph(seeds, store, whitelist, {"animal", "bird"}).edges.empty());
    KnowledgeOptions opts;
    opts.match_tail = true;
    const LabeledGraph g = build_knowledge_graph(seeds, store, whitelist, {"animal", "bird"}, opts);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.nodes[g.edges[0].src].object == "animal");
    CHECK(g.nodes[g.edges[0].dst].object == "bird");
  }

  TEST_CASE("random stores match brute-force filtering") {
    Rng rng(51);
    for (int trial = 0; trial < 50; ++trial) {
      CAPTURE(trial);
      const auto facts = random_facts(1 + rng.below(200), rng);
      const auto seeds = random_seeds(rng);
      const auto vocab = random_vocab(rng);
      const FactStore store(facts);
      const LabeledGraph got = build_knowledge_graph(seeds, store, whitelist, vocab);
      const LabeledGraph want = oracle::brute_force_knowledge(seeds, facts, whitelist.allowed(), vocab);
      CHECK(canonical_string(got) == canonical_string(want));

      // Every relation whitelisted; every non-seed node is a tail of an admitted seed fact.
      std::set<std::string> seed_tokens;
      for (const auto& s : seeds) {
        seed_tokens.insert(normalize_concept(s.object));
        for (const auto& a : s.attributes) seed_tokens.insert(normalize_concept(a));
      }
      for (const auto& e : got.edges) {
        CHECK(whitelist.contains(e.relation));
        CHECK(seed_tokens.count(got.nodes[e.src].object));
      }
      for (std::size_t i = 0; i < got.nodes.size(); ++i) {
        if (seed_tokens.count(got.nodes[i].object)) continue;
        const bool reached = std::any_of(got.edges.begin(), got.edges.end(), [&](const GraphEdge& e) { return e.dst == i; });
        CHECK(reached);
      }

      // Fact order does not matter.
      auto shuffled = facts;
      rng.shuffle(shuffled);
      CHECK(canonical_string(build_knowledge_graph(seeds, FactStore(shuffled), whitelist, vocab)) ==
            canonical_string(got));
    }
  }

  TEST_CASE("fact store indexes return exactly the matching triples") {
    Rng rng(52);
    const auto facts = random_facts(120, rng);
    const FactStore store(facts);
    for (const auto& c : kConcepts) {
      std::size_t heads = 0, tails = 0;
      for (const auto& f : store.facts()) {
        heads += f.head == c;
        tails += f.tail == c;
      }
      CHECK(store.by_head(c).size() == heads);
      CHECK(store.by_tail(c).size() == tails);
      for (std::size_t i : store.by_head(c)) CHECK(store.facts()[i].head == c);
      for (std::size_t i : store.by_tail(c)) CHECK(store.facts()[i].tail == c);
    }
  }

  TEST_CASE("fact TSV parses with underscores and rejects short lines") {
    std::istringstream in("RelatedTo\tice_cream\tcold\nIsA\tcar\tvehicle\n");
    const FactStore store = parse_fact_store(in);
    CHECK(store.size() == 2);
    CHECK(store.by_head("ice cream").size() == 1);
    std::istringstream bad("RelatedTo\tice\n");
    CHECK_THROWS_AS(parse_fact_store(bad, "facts.tsv"), ParseError);
  }

  TEST_CASE("relation phrases split camel case") {
    CHECK(relation_phrase("RelatedTo") == "related to");
    CHECK(relation_phrase("sit in") == "sit in");
    CHECK(normalize_relation("IsA", GraphKind::Knowledge) == "IsA");
    CHECK(normalize_relation(" Sit  In ", GraphKind::Scene) == "sit in");
  }
}
