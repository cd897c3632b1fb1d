#include "skg/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "skg/errors.hpp"
#include "skg/rng.hpp"

namespace skg {

namespace fs = std::filesystem;

const char* to_string(SynthPattern p) {
  switch (p) {
    case SynthPattern::Planted: return "planted";
    case SynthPattern::Dual: return "dual";
    case SynthPattern::Paired: return "paired";
  }
  return "?";
}

SynthPattern parse_synth_pattern(const std::string& s) {
  if (s == "planted") return SynthPattern::Planted;
  if (s == "dual") return SynthPattern::Dual;
  if (s == "paired") return SynthPattern::Paired;
  throw ConfigError("unknown synth pattern '" + s + "' (planted, dual, paired)");
}

void SynthSpec::validate() const {
  if (pattern == SynthPattern::Planted && num_labels < 2) throw ConfigError("synth needs at least 2 labels");
  if (examples < 1) throw ConfigError("synth needs at least 1 example");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synth noise must lie in [0, 1]");
  if (labels_per_example < 1 || (pattern == SynthPattern::Planted && labels_per_example > num_labels))
    throw ConfigError("labels_per_example must lie in [1, num_labels]");
  if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
  if (pool_size < 1) throw ConfigError("pool_size must be >= 1");
}

nlohmann::json synth_spec_to_json(const SynthSpec& s) {
  return {{"pattern", to_string(s.pattern)},
          {"num_labels", s.num_labels},
          {"examples", s.examples},
          {"noise", s.noise},
          {"labels_per_example", s.labels_per_example},
          {"max_distractors", s.max_distractors},
          {"pool_size", s.pool_size},
          {"embed_dim", s.embed_dim},
          {"seed", s.seed}};
}

namespace {

std::string tok(const char* prefix, std::size_t i, const char* suffix = "") {
  return prefix + std::to_string(i) + suffix;
}

std::size_t add_node(LabeledGraph& g, std::string object, std::vector<std::string> attributes = {}) {
  g.nodes.push_back({std::move(object), std::move(attributes)});
  return g.nodes.size() - 1;
}

void add_edge(LabeledGraph& g, std::size_t src, std::size_t dst, std::string rel) {
  g.edges.push_back({src, dst, std::move(rel)});
}

constexpr std::size_t kNoiseTokens = 12;

// Unlabeled clutter shared by every pattern.
void add_distractors(LabeledGraph& g, std::size_t max_count, Rng& rng) {
  const std::size_t count = rng.below(max_count + 1);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<std::string> attrs;
    if (rng.bernoulli(0.5)) attrs.push_back(tok("nattr", rng.below(kNoiseTokens)));
    const std::size_t n = add_node(g, tok("noise", rng.below(kNoiseTokens)), std::move(attrs));
    if (n > 0 && rng.bernoulli(0.7)) add_edge(g, rng.below(n), n, tok("npred", rng.below(kNoiseTokens)));
  }
}

// Facts that exercise the filters: off-whitelist relations and tails outside
// the vocabulary.
void add_background_facts(std::vector<Fact>& facts, Vocabulary& vocab) {
  for (std::size_t k = 0; k < kNoiseTokens; ++k) {
    facts.push_back({"RelatedTo", tok("noise", k), tok("nconcept", k)});
    facts.push_back({"Synonym", tok("noise", k), tok("nsyn", k)});
    facts.push_back({"IsA", tok("noise", k), tok("oov", k)});
    vocab.insert(tok("noise", k));
    vocab.insert(tok("nattr", k));
    vocab.insert(tok("nconcept", k));
    vocab.insert(tok("nsyn", k));
  }
}

struct Builder {
  std::vector<std::string> labels;
  std::vector<SceneDocument> scenes;
  std::vector<Fact> facts;
  Vocabulary vocab;
};

std::string image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%05zu", i);
  return buf;
}

void build_planted(const SynthSpec& spec, Rng& rng, Builder& b) {
  const std::size_t c = spec.num_labels;
  for (std::size_t l = 0; l < c; ++l) {
    b.labels.push_back(tok("symbol", l));
    b.facts.push_back({"RelatedTo", tok("lab", l, "obja"), tok("lab", l, "concept")});
    b.vocab.insert(tok("lab", l, "obja"));
    b.vocab.insert(tok("lab", l, "objb"));
    b.vocab.insert(tok("lab", l, "concept"));
  }
  auto pick = [&](std::size_t l) { return rng.bernoulli(spec.noise) ? rng.below(c) : l; };
  for (std::size_t i = 0; i < spec.examples; ++i) {
    std::vector<std::size_t> ids(c);
    for (std::size_t l = 0; l < c; ++l) ids[l] = l;
    rng.shuffle(ids);
    ids.resize(spec.labels_per_example);
    std::sort(ids.begin(), ids.end());

    SceneDocument doc;
    doc.image_id = image_id(i);
    for (std::size_t l : ids) {
      doc.labels.push_back(tok("symbol", l));
      const std::size_t a = add_node(doc.graph, tok("lab", pick(l), "obja"));
      const std::size_t o = add_node(doc.graph, tok("lab", pick(l), "objb"));
      add_edge(doc.graph, a, o, tok("lab", pick(l), "pred"));
    }
    add_distractors(doc.graph, spec.max_distractors, rng);
    b.scenes.push_back(std::move(doc));
  }
}

void build_dual(const SynthSpec& spec, Rng& rng, Builder& b) {
  for (std::size_t l = 0; l < 4; ++l) b.labels.push_back(tok("symbol", l));
  for (std::size_t bit = 0; bit < 2; ++bit) {
    b.vocab.insert(tok("dualconcept", bit));
    for (std::size_t k = 0; k < spec.pool_size; ++k) {
      const std::string head = tok("dualb", bit, "obj") + std::to_string(k);
      // Tail features reach the knowledge tower only through the reversed
      // edge's source term, so b also rides on the relation of the fact.
      b.facts.push_back({bit == 0 ? "RelatedTo" : "IsA", head, tok("dualconcept", bit)});
      b.vocab.insert(head);
    }
  }
  b.vocab.insert("dualneutral");
  for (std::size_t i = 0; i < spec.examples; ++i) {
    std::size_t a = rng.below(2), bit = rng.below(2);
    const std::size_t label = 2 * a + bit;
    if (rng.bernoulli(spec.noise)) a = rng.below(2);
    if (rng.bernoulli(spec.noise)) bit = rng.below(2);
    SceneDocument doc;
    doc.image_id = image_id(i);
    doc.labels.push_back(tok("symbol", label));
    const std::size_t h = add_node(doc.graph, tok("dualb", bit, "obj") + std::to_string(rng.below(spec.pool_size)));
    const std::size_t n = add_node(doc.graph, "dualneutral");
    // A state only survives the GCN layers on a cycle or a source node, so
    // both signals sit on two-node cycles.
    add_edge(doc.graph, h, n, tok("dualpred", a));
    add_edge(doc.graph, n, h, tok("dualpred", a));
    add_distractors(doc.graph, spec.max_distractors, rng);
    b.scenes.push_back(std::move(doc));
  }
}

void build_paired(const SynthSpec& spec, Rng& rng, Builder& b) {
  b.labels = {"crossed", "matched"};
  constexpr std::size_t kSources = 6;
  for (std::size_t k = 0; k < kSources; ++k) b.vocab.insert(tok("src", k));
  for (const char* t : {"relay", "hop", "join"}) b.vocab.insert(t);
  for (std::size_t i = 0; i < spec.examples; ++i) {
    const std::size_t p = rng.below(kSources);
    const std::size_t q = (p + 1 + rng.below(kSources - 1)) % kSources;
    bool matched = rng.bernoulli(0.5);
    const std::size_t label = matched ? 1 : 0;
    if (rng.bernoulli(spec.noise)) matched = rng.bernoulli(0.5);
    const std::pair<std::size_t, std::size_t> joins[2] = {matched ? std::pair{p, p} : std::pair{p, q},
                                                          matched ? std::pair{q, q} : std::pair{q, p}};
    SceneDocument doc;
    doc.image_id = image_id(i);
    doc.labels.push_back(b.labels[label]);
    for (const auto& [s1, s2] : joins) {
      const std::size_t join = add_node(doc.graph, "join");
      for (std::size_t s : {s1, s2}) {
        const std::size_t src = add_node(doc.graph, tok("src", s));
        const std::size_t relay = add_node(doc.graph, "relay");
        const std::size_t hop = add_node(doc.graph, "hop");
        add_edge(doc.graph, src, relay, "next");
        add_edge(doc.graph, relay, hop, "next");
        add_edge(doc.graph, hop, join, "next");
      }
    }
    add_distractors(doc.graph, spec.max_distractors, rng);
    b.scenes.push_back(std::move(doc));
  }
}

}  // namespace

SynthData generate_synth(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, "synth");
  Builder b;
  switch (spec.pattern) {
    case SynthPattern::Planted: build_planted(spec, rng, b); break;
    case SynthPattern::Dual: build_dual(spec, rng, b); break;
    case SynthPattern::Paired: build_paired(spec, rng, b); break;
  }
  add_background_facts(b.facts, b.vocab);

  SynthData out;
  out.labels = b.labels;
  out.facts = FactStore(b.facts);

  // Every word that can reach an embedding lookup, in sorted order.
  std::set<std::string> words;
  auto add_words = [&](std::string_view phrase) {
    for (auto& w : phrase_words(phrase)) words.insert(std::move(w));
  };
  for (const auto& doc : b.scenes) {
    for (const auto& n : doc.graph.nodes) {
      add_words(n.object);
      for (const auto& a : n.attributes) add_words(a);
    }
    for (const auto& e : doc.graph.edges) add_words(e.relation);
  }
  for (const auto& f : out.facts.facts()) {
    add_words(relation_phrase(f.relation));
    add_words(f.head);
    add_words(f.tail);
  }
  add_words(kSelfRelation);
  out.table = EmbeddingTable(spec.embed_dim);
  std::vector<double> vec(spec.embed_dim);
  for (const auto& w : words) {
    for (double& v : vec) v = rng.uniform(-1.0, 1.0);
    out.table.insert(w, vec);
  }

  out.vocab = b.vocab;
  PrepareOptions options;
  options.seed = spec.seed;
  options.knowledge.add_reverse = spec.pattern == SynthPattern::Dual;
  out.dataset = prepare_dataset(b.scenes, out.facts, out.vocab, out.labels, options);
  out.scenes = std::move(b.scenes);
  return out;
}

void write_synth(const std::string& dir, const SynthSpec& spec, const SynthData& data) {
  const fs::path root(dir);
  fs::create_directories(root / "scenes");
  for (const auto& doc : data.scenes) {
    std::ofstream out(root / "scenes" / (doc.image_id + ".json"), std::ios::binary);
    out << scene_graph_to_json(doc).dump(1) << "\n";
  }
  save_fact_store(data.facts, (root / "facts.tsv").string());
  {
    std::ofstream out(root / "vocab.txt", std::ios::binary);
    for (const auto& v : data.vocab) out << v << "\n";
  }
  {
    std::ofstream out(root / "labels.txt", std::ios::binary);
    for (const auto& l : data.labels) out << l << "\n";
  }
  save_embeddings(data.table, (root / "embeddings.txt").string());
  {
    std::ofstream out(root / "synth.json", std::ios::binary);
    out << synth_spec_to_json(spec).dump(1) << "\n";
  }
  write_bundle((root / "bundle").string(), data.dataset, spec.seed);
}

}  // namespace skg
