#pragma once

// Dataset bundles: a directory of per-image example documents plus a split
// manifest.
//
//   <bundle>/labels.txt             one label per line, defines label ids
//   <bundle>/splits.json            {"seed": n, "train": [ids], "val": [...], "test": [...]}
//   <bundle>/examples/<id>.json     {"image_id", "labels", "scene": graph, "knowledge": graph}
//
// A graph is {"nodes": [{"name", "attributes"}], "edges": [{"src", "dst", "rel"}]}.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "skg/graphs.hpp"
#include "skg/training.hpp"

namespace skg {

struct PrepareOptions {
  std::uint64_t seed = 0;
  KnowledgeOptions knowledge;
  // Add reversed copies of every scene-graph edge as well.
  bool reverse_scene_edges = false;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};
// round(0.6 n) / round(0.2 n) / remainder
SplitSizes split_sizes(std::size_t n, double train_fraction = 0.6, double val_fraction = 0.2);

std::vector<std::string> load_labels(const std::string& path);

// Builds every example's knowledge graph from its scene graph and splits the
// examples by a seeded shuffle of the sorted image ids. `warnings` collects
// non-fatal notes (e.g. images without objects).
Dataset prepare_dataset(const std::vector<SceneDocument>& scenes, const FactStore& store, const Vocabulary& vocab,
                        const std::vector<std::string>& labels, const PrepareOptions& options,
                        std::vector<std::string>* warnings = nullptr);

// Reads every *.json scene graph in `dir` (sorted by file name).
std::vector<SceneDocument> load_scene_dir(const std::string& dir);

nlohmann::json example_to_json(const Example& e);
Example example_from_json(const nlohmann::json& j, const std::string& source);

void write_bundle(const std::string& dir, const Dataset& data, std::uint64_t seed);
Dataset read_bundle(const std::string& dir);

// FNV-1a 64 of a file, or of every regular file below a directory in path
// order, as 16 hex digits.
std::string content_hash(const std::string& path);

}  // namespace skg
