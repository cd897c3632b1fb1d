#pragma once

#include <cstddef>
#include <compare>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace skg {

enum class GraphKind { Scene, Knowledge };

const char* kind_name(GraphKind kind);

struct GraphNode {
  std::string object;
  std::vector<std::string> attributes;

  bool operator==(const GraphNode&) const = default;
};

struct GraphEdge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::string relation;

  auto operator<=>(const GraphEdge&) const = default;
};

struct LabeledGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  GraphKind kind = GraphKind::Scene;

  bool operator==(const LabeledGraph&) const = default;
};

// Concept form used for graph nodes and fact lookup: underscores become
// spaces, then normalize_token.
std::string normalize_concept(std::string_view concept_token);
// Scene predicates are lowercased; knowledge relations keep their case.
std::string normalize_relation(std::string_view relation, GraphKind kind);
// Word form of a relation for embedding lookup: "RelatedTo" -> "related to".
std::string relation_phrase(std::string_view relation);

// Canonical form: normalized tokens, no duplicate (src, dst, relation) edges.
// Knowledge graphs merge nodes with equal tokens and order nodes and edges by
// token; scene graphs keep their node order and first-seen edge order.
// Throws ValidationError on out-of-range edges or empty object tokens.
LabeledGraph validate_graph(LabeledGraph g);

// Appends dst->src for every edge, then re-canonicalizes.
LabeledGraph with_reverse_edges(LabeledGraph g);

nlohmann::json graph_to_json(const LabeledGraph& g);
LabeledGraph graph_from_json(const nlohmann::json& j, GraphKind kind, const std::string& path = "$");
// Compact JSON of the canonical graph; equal strings mean byte-identical graphs.
std::string canonical_string(const LabeledGraph& g);

// ---------------------------------------------------------------- scene graphs

struct SceneDocument {
  std::string image_id;
  LabeledGraph graph;
  std::vector<std::string> labels;
};

// {"image_id": str, "objects": [{"name": str, "attributes": [str]}],
//  "relations": [{"subj": int, "pred": str, "obj": int}], "labels": [str]}
// Edges run subj -> obj. Unknown fields are rejected.
SceneDocument parse_scene_graph(const nlohmann::json& doc, const std::string& source = "$");
SceneDocument parse_scene_graph_text(std::string_view text, const std::string& source = "$");
SceneDocument load_scene_graph(const std::string& path);
nlohmann::json scene_graph_to_json(const SceneDocument& doc);

// ---------------------------------------------------------------- knowledge

struct Fact {
  std::string relation;
  std::string head;
  std::string tail;

  auto operator<=>(const Fact&) const = default;
};

// Immutable-after-load triple set with head and tail indexes.
class FactStore {
 public:
  FactStore() = default;
  explicit FactStore(std::vector<Fact> facts);

  const std::vector<Fact>& facts() const { return facts_; }
  std::size_t size() const { return facts_.size(); }
  // Indices into facts() whose head (tail) equals the normalized concept.
  std::span<const std::size_t> by_head(std::string_view concept_token) const;
  std::span<const std::size_t> by_tail(std::string_view concept_token) const;

 private:
  std::vector<Fact> facts_;
  std::unordered_map<std::string, std::vector<std::size_t>> head_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> tail_index_;
};

// relation<TAB>head<TAB>tail per line.
FactStore parse_fact_store(std::istream& in, const std::string& source = "<stream>");
FactStore load_fact_store(const std::string& path);
void save_fact_store(const FactStore& store, const std::string& path);

class RelationWhitelist {
 public:
  // The twenty most frequent ConceptNet relations.
  static RelationWhitelist defaults();
  explicit RelationWhitelist(std::set<std::string> allowed) : allowed_(std::move(allowed)) {}

  bool contains(std::string_view relation) const { return allowed_.count(std::string(relation)) > 0; }
  const std::set<std::string>& allowed() const { return allowed_; }

 private:
  std::set<std::string> allowed_;
};

using Vocabulary = std::set<std::string>;

// One token per line, normalized as concepts.
Vocabulary parse_vocabulary(std::istream& in);
Vocabulary load_vocabulary(const std::string& path);

struct KnowledgeOptions {
  // Also admit (r, a, seed) facts with a in the vocabulary.
  bool match_tail = false;
  bool add_reverse = false;
};

// One-hop expansion of the seed tokens (objects and attributes) through
// whitelisted facts whose far end lies in the vocabulary. Canonical output.
LabeledGraph build_knowledge_graph(std::span<const GraphNode> seeds, const FactStore& store,
                                   const RelationWhitelist& whitelist, const Vocabulary& vocab,
                                   const KnowledgeOptions& options = {});

}  // namespace skg
