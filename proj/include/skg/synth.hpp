#pragma once

// Synthetic datasets with planted label signals.
//
//   planted  label l is carried by a scene pattern (lab<l>obja -lab<l>pred-> lab<l>objb)
//            and a fact (RelatedTo, lab<l>obja, lab<l>concept). noise p replaces each
//            planted element by the same-role element of a random label.
//   dual     four labels, label = 2a + b. a is the scene predicate, b is only
//            visible through the relation of a fact about a head object drawn
//            from a large pool (RelatedTo for b = 0, IsA for b = 1). The scene
//            predicate edge runs both ways and the bundle is prepared with
//            reversed knowledge edges, so neither signal sits on a sink node.
//   paired   two labels. Each image holds two three-hop chains that join pairs of
//            source objects; "matched" joins equal sources, "crossed" mixed ones.
//            The multiset of source objects is the same for both labels.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "skg/bundle.hpp"
#include "skg/embeddings.hpp"
#include "skg/graphs.hpp"

namespace skg {

enum class SynthPattern { Planted, Dual, Paired };
const char* to_string(SynthPattern p);
SynthPattern parse_synth_pattern(const std::string& s);

struct SynthSpec {
  SynthPattern pattern = SynthPattern::Planted;
  std::size_t num_labels = 2;  // fixed at 4 for dual and 2 for paired
  std::size_t examples = 200;
  double noise = 0.0;
  std::size_t labels_per_example = 1;
  std::size_t max_distractors = 2;
  std::size_t pool_size = 300;  // dual head-object pool per b
  std::size_t embed_dim = 300;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json synth_spec_to_json(const SynthSpec& s);

struct SynthData {
  std::vector<std::string> labels;
  std::vector<SceneDocument> scenes;
  FactStore facts;
  Vocabulary vocab;
  EmbeddingTable table;
  Dataset dataset;
};

// Everything derives from spec.seed through the "synth" and "split" streams.
SynthData generate_synth(const SynthSpec& spec);

// <dir>/scenes/*.json, facts.tsv, vocab.txt, labels.txt, embeddings.txt,
// synth.json and the prepared bundle under <dir>/bundle.
void write_synth(const std::string& dir, const SynthSpec& spec, const SynthData& data);

}  // namespace skg
