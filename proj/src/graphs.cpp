#include "skg/graphs.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "skg/embeddings.hpp"
#include "skg/errors.hpp"

namespace skg {

using nlohmann::json;

const char* kind_name(GraphKind kind) { return kind == GraphKind::Scene ? "scene" : "knowledge"; }

std::string normalize_concept(std::string_view concept_token) {
  std::string s(concept_token);
  std::replace(s.begin(), s.end(), '_', ' ');
  return normalize_token(s);
}

std::string normalize_relation(std::string_view relation, GraphKind kind) {
  if (kind == GraphKind::Scene) return normalize_token(relation);
  // Collapse whitespace but keep case, so "RelatedTo" stays comparable with
  // the whitelist.
  std::string out;
  bool pending_space = false;
  for (char ch : relation) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

std::string relation_phrase(std::string_view relation) {
  std::string out;
  for (std::size_t i = 0; i < relation.size(); ++i) {
    const auto c = static_cast<unsigned char>(relation[i]);
    if (std::isupper(c) && i > 0 && std::islower(static_cast<unsigned char>(relation[i - 1]))) out.push_back(' ');
    out.push_back(relation[i]);
  }
  return normalize_concept(out);
}

// ---------------------------------------------------------------- canonical form

namespace {

std::vector<std::string> normalized_attributes(const std::vector<std::string>& attrs) {
  std::vector<std::string> out;
  for (const auto& a : attrs) {
    std::string n = normalize_concept(a);
    if (!n.empty() && std::find(out.begin(), out.end(), n) == out.end()) out.push_back(std::move(n));
  }
  return out;
}

}  // namespace

LabeledGraph validate_graph(LabeledGraph g) {
  const std::size_t n = g.nodes.size();
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& edge = g.edges[e];
    if (edge.src >= n || edge.dst >= n)
      throw ValidationError("edge " + std::to_string(e) + " (" + std::to_string(edge.src) + " -> " +
                            std::to_string(edge.dst) + ") out of range for " + std::to_string(n) + " nodes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = g.nodes[i];
    node.object = normalize_concept(node.object);
    if (node.object.empty()) throw ValidationError("node " + std::to_string(i) + " has an empty object token");
    node.attributes = normalized_attributes(node.attributes);
  }
  for (auto& edge : g.edges) edge.relation = normalize_relation(edge.relation, g.kind);

  if (g.kind == GraphKind::Scene) {
    std::set<GraphEdge> seen;
    std::vector<GraphEdge> kept;
    for (auto& edge : g.edges)
      if (seen.insert(edge).second) kept.push_back(std::move(edge));
    g.edges = std::move(kept);
    return g;
  }

  // Knowledge graph: merge equal tokens, order by token.
  std::map<std::string, std::vector<std::string>> merged;
  for (const auto& node : g.nodes) {
    auto& attrs = merged[node.object];
    for (const auto& a : node.attributes)
      if (std::find(attrs.begin(), attrs.end(), a) == attrs.end()) attrs.push_back(a);
  }
  std::map<std::string, std::size_t> position;
  std::vector<GraphNode> nodes;
  for (auto& [token, attrs] : merged) {
    std::sort(attrs.begin(), attrs.end());
    position.emplace(token, nodes.size());
    nodes.push_back(GraphNode{token, attrs});
  }
  std::set<GraphEdge> edges;
  for (const auto& edge : g.edges)
    edges.insert(GraphEdge{position.at(g.nodes[edge.src].object), position.at(g.nodes[edge.dst].object),
                           edge.relation});
  g.nodes = std::move(nodes);
  g.edges.assign(edges.begin(), edges.end());
  return g;
}

LabeledGraph with_reverse_edges(LabeledGraph g) {
  const std::size_t count = g.edges.size();
  for (std::size_t e = 0; e < count; ++e) {
    GraphEdge rev{g.edges[e].dst, g.edges[e].src, g.edges[e].relation};
    g.edges.push_back(std::move(rev));
  }
  return validate_graph(std::move(g));
}

json graph_to_json(const LabeledGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"name", n.object}, {"attributes", n.attributes}});
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({{"src", e.src}, {"dst", e.dst}, {"rel", e.relation}});
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

namespace {

[[noreturn]] void schema_fail(const std::string& path, const std::string& what) { throw SchemaError(path, what); }

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) schema_fail(path + "." + it.key(), "unknown field");
  }
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_fail(path + "." + key, "missing field");
  return *it;
}

std::string require_string(const json& v, const std::string& path) {
  if (!v.is_string()) schema_fail(path, "expected a string");
  return v.get<std::string>();
}

std::size_t require_index(const json& v, const std::string& path) {
  if (!v.is_number_integer()) schema_fail(path, "expected an integer");
  const auto i = v.get<long long>();
  if (i < 0) schema_fail(path, "negative index");
  return static_cast<std::size_t>(i);
}

std::vector<std::string> string_list(const json& v, const std::string& path) {
  if (!v.is_array()) schema_fail(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(require_string(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

LabeledGraph graph_from_json(const json& j, GraphKind kind, const std::string& path) {
  if (!j.is_object()) schema_fail(path, "expected an object");
  reject_unknown(j, {"nodes", "edges"}, path);
  LabeledGraph g;
  g.kind = kind;
  const json& nodes = require(j, "nodes", path);
  if (!nodes.is_array()) schema_fail(path + ".nodes", "expected an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = path + ".nodes[" + std::to_string(i) + "]";
    if (!nodes[i].is_object()) schema_fail(p, "expected an object");
    reject_unknown(nodes[i], {"name", "attributes"}, p);
    GraphNode node{require_string(require(nodes[i], "name", p), p + ".name"), {}};
    if (auto it = nodes[i].find("attributes"); it != nodes[i].end()) node.attributes = string_list(*it, p + ".attributes");
    g.nodes.push_back(std::move(node));
  }
  const json& edges = require(j, "edges", path);
  if (!edges.is_array()) schema_fail(path + ".edges", "expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = path + ".edges[" + std::to_string(i) + "]";
    if (!edges[i].is_object()) schema_fail(p, "expected an object");
    reject_unknown(edges[i], {"src", "dst", "rel"}, p);
    GraphEdge e{require_index(require(edges[i], "src", p), p + ".src"),
                require_index(require(edges[i], "dst", p), p + ".dst"),
                require_string(require(edges[i], "rel", p), p + ".rel")};
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size()) schema_fail(p, "dangling node index");
    g.edges.push_back(std::move(e));
  }
  return g;
}

std::string canonical_string(const LabeledGraph& g) {
  json j = graph_to_json(g);
  j["kind"] = kind_name(g.kind);
  return j.dump();
}

// ---------------------------------------------------------------- scene graphs

SceneDocument parse_scene_graph(const json& doc, const std::string& source) {
  const std::string& root = source;
  if (!doc.is_object()) schema_fail(root, "expected an object");
  reject_unknown(doc, {"image_id", "objects", "relations", "labels"}, root);

  SceneDocument out;
  out.graph.kind = GraphKind::Scene;
  if (auto it = doc.find("image_id"); it != doc.end()) out.image_id = require_string(*it, root + ".image_id");

  const json& objects = require(doc, "objects", root);
  if (!objects.is_array()) schema_fail(root + ".objects", "expected an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const std::string p = root + ".objects[" + std::to_string(i) + "]";
    if (!objects[i].is_object()) schema_fail(p, "expected an object");
    reject_unknown(objects[i], {"name", "attributes"}, p);
    GraphNode node{require_string(require(objects[i], "name", p), p + ".name"), {}};
    if (normalize_concept(node.object).empty()) schema_fail(p + ".name", "empty object token");
    if (auto it = objects[i].find("attributes"); it != objects[i].end())
      node.attributes = string_list(*it, p + ".attributes");
    out.graph.nodes.push_back(std::move(node));
  }

  if (auto rit = doc.find("relations"); rit != doc.end()) {
    if (!rit->is_array()) schema_fail(root + ".relations", "expected an array");
    for (std::size_t i = 0; i < rit->size(); ++i) {
      const json& r = (*rit)[i];
      const std::string p = root + ".relations[" + std::to_string(i) + "]";
      if (!r.is_object()) schema_fail(p, "expected an object");
      reject_unknown(r, {"subj", "pred", "obj"}, p);
      GraphEdge e{require_index(require(r, "subj", p), p + ".subj"), require_index(require(r, "obj", p), p + ".obj"),
                  require_string(require(r, "pred", p), p + ".pred")};
      if (e.src >= out.graph.nodes.size()) schema_fail(p + ".subj", "dangling object index " + std::to_string(e.src));
      if (e.dst >= out.graph.nodes.size()) schema_fail(p + ".obj", "dangling object index " + std::to_string(e.dst));
      out.graph.edges.push_back(std::move(e));
    }
  }
  if (auto it = doc.find("labels"); it != doc.end()) out.labels = string_list(*it, root + ".labels");
  out.graph = validate_graph(std::move(out.graph));
  return out;
}

SceneDocument parse_scene_graph_text(std::string_view text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(source, std::string("invalid JSON: ") + e.what());
  }
  return parse_scene_graph(doc, source);
}

SceneDocument load_scene_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene graph '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_graph_text(ss.str(), path);
}

json scene_graph_to_json(const SceneDocument& doc) {
  json objects = json::array();
  for (const auto& n : doc.graph.nodes) objects.push_back({{"name", n.object}, {"attributes", n.attributes}});
  json relations = json::array();
  for (const auto& e : doc.graph.edges) relations.push_back({{"subj", e.src}, {"pred", e.relation}, {"obj", e.dst}});
  return {{"image_id", doc.image_id}, {"objects", std::move(objects)}, {"relations", std::move(relations)},
          {"labels", doc.labels}};
}

// ---------------------------------------------------------------- facts

FactStore::FactStore(std::vector<Fact> facts) {
  for (auto& f : facts) {
    f.relation = normalize_relation(f.relation, GraphKind::Knowledge);
    f.head = normalize_concept(f.head);
    f.tail = normalize_concept(f.tail);
  }
  std::sort(facts.begin(), facts.end());
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
  facts_ = std::move(facts);
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    head_index_[facts_[i].head].push_back(i);
    tail_index_[facts_[i].tail].push_back(i);
  }
}

std::span<const std::size_t> FactStore::by_head(std::string_view concept_token) const {
  auto it = head_index_.find(normalize_concept(concept_token));
  if (it == head_index_.end()) return {};
  return it->second;
}

std::span<const std::size_t> FactStore::by_tail(std::string_view concept_token) const {
  auto it = tail_index_.find(normalize_concept(concept_token));
  if (it == tail_index_.end()) return {};
  return it->second;
}

FactStore parse_fact_store(std::istream& in, const std::string& source) {
  std::vector<Fact> facts;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw ParseError(source, lineno, "expected relation<TAB>head<TAB>tail, found " + std::to_string(fields.size()) +
                                           " fields");
    Fact f{fields[0], fields[1], fields[2]};
    if (normalize_concept(f.head).empty() || normalize_concept(f.tail).empty() ||
        normalize_relation(f.relation, GraphKind::Knowledge).empty())
      throw ParseError(source, lineno, "empty field");
    facts.push_back(std::move(f));
  }
  return FactStore(std::move(facts));
}

FactStore load_fact_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fact store '" + path + "'");
  return parse_fact_store(in, path);
}

void save_fact_store(const FactStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write fact store '" + path + "'");
  auto underscored = [](std::string s) {
    std::replace(s.begin(), s.end(), ' ', '_');
    return s;
  };
  for (const auto& f : store.facts())
    out << f.relation << '\t' << underscored(f.head) << '\t' << underscored(f.tail) << '\n';
}

RelationWhitelist RelationWhitelist::defaults() {
  return RelationWhitelist({"RelatedTo", "IsA", "HasA", "PartOf", "MadeOf", "FormOf", "AtLocation",
                            "Causes", "HasProperty", "HasFirstSubevent", "HasPrerequisite", "HasSubevent",
                            "UsedFor", "CapableOf", "DefinedAs", "SimilarTo", "CausesDesire", "Desires",
                            "MotivatedByGoal", "DerivedFrom"});
}

Vocabulary parse_vocabulary(std::istream& in) {
  Vocabulary vocab;
  for (std::string line; std::getline(in, line);) {
    std::string token = normalize_concept(line);
    if (!token.empty()) vocab.insert(std::move(token));
  }
  return vocab;
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary '" + path + "'");
  return parse_vocabulary(in);
}

// ---------------------------------------------------------------- knowledge graph

LabeledGraph build_knowledge_graph(std::span<const GraphNode> seeds, const FactStore& store,
                                   const RelationWhitelist& whitelist, const Vocabulary& vocab,
                                   const KnowledgeOptions& options) {
  std::set<std::string> seed_tokens;
  for (const auto& node : seeds) {
    if (auto t = normalize_concept(node.object); !t.empty()) seed_tokens.insert(std::move(t));
    for (const auto& a : node.attributes)
      if (auto t = normalize_concept(a); !t.empty()) seed_tokens.insert(std::move(t));
  }

  std::set<const Fact*> admitted;
  for (const auto& seed : seed_tokens) {
    for (std::size_t i : store.by_head(seed)) {
      const Fact& f = store.facts()[i];
      if (whitelist.contains(f.relation) && vocab.count(f.tail)) admitted.insert(&f);
    }
    if (options.match_tail) {
      for (std::size_t i : store.by_tail(seed)) {
        const Fact& f = store.facts()[i];
        if (whitelist.contains(f.relation) && vocab.count(f.head)) admitted.insert(&f);
      }
    }
  }

  std::set<std::string> concepts = seed_tokens;
  for (const Fact* f : admitted) {
    concepts.insert(f->head);
    concepts.insert(f->tail);
  }

  LabeledGraph g;
  g.kind = GraphKind::Knowledge;
  std::map<std::string, std::size_t> position;
  for (const auto& c : concepts) {
    position.emplace(c, g.nodes.size());
    g.nodes.push_back(GraphNode{c, {}});
  }
  for (const Fact* f : admitted) {
    g.edges.push_back(GraphEdge{position.at(f->head), position.at(f->tail), f->relation});
    if (options.add_reverse) g.edges.push_back(GraphEdge{position.at(f->tail), position.at(f->head), f->relation});
  }
  return validate_graph(std::move(g));
}

}  // namespace skg
