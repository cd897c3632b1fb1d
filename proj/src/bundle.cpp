#include "skg/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "skg/errors.hpp"
#include "skg/rng.hpp"

namespace skg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string file_stem_for(const std::string& id) {
  std::string out;
  for (char c : id) out.push_back((std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_') ? c : '_');
  if (out.empty() || out[0] == '.') out.insert(out.begin(), '_');
  return out;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path, std::string("invalid JSON: ") + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

}  // namespace

SplitSizes split_sizes(std::size_t n, double train_fraction, double val_fraction) {
  SplitSizes s;
  s.train = std::min(n, static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))));
  s.val = std::min(n - s.train, static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))));
  s.test = n - s.train - s.val;
  return s;
}

std::vector<std::string> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label list '" + path + "'");
  std::vector<std::string> labels;
  for (std::string line; std::getline(in, line);) {
    std::string l = trim(line);
    if (l.empty()) continue;
    if (std::find(labels.begin(), labels.end(), l) != labels.end())
      throw ConfigError("duplicate label '" + l + "' in " + path);
    labels.push_back(std::move(l));
  }
  if (labels.size() < 2) throw ConfigError("label list '" + path + "' needs at least two labels");
  return labels;
}

Dataset prepare_dataset(const std::vector<SceneDocument>& scenes, const FactStore& store, const Vocabulary& vocab,
                        const std::vector<std::string>& labels, const PrepareOptions& options,
                        std::vector<std::string>* warnings) {
  Vocabulary full_vocab = vocab;
  for (const auto& l : labels) full_vocab.insert(normalize_concept(l));
  const auto whitelist = RelationWhitelist::defaults();

  std::map<std::string, Example> by_id;
  for (const auto& doc : scenes) {
    if (doc.image_id.empty()) throw SchemaError("$.image_id", "scene graph without an image id");
    Example e;
    e.image_id = doc.image_id;
    e.scene = options.reverse_scene_edges ? with_reverse_edges(doc.graph) : validate_graph(doc.graph);
    e.knowledge = build_knowledge_graph(e.scene.nodes, store, whitelist, full_vocab, options.knowledge);
    for (std::size_t i = 0; i < doc.labels.size(); ++i) {
      std::string l = trim(doc.labels[i]);
      if (std::find(labels.begin(), labels.end(), l) == labels.end())
        throw SchemaError(doc.image_id + ":$.labels[" + std::to_string(i) + "]", "label '" + l + "' not in label list");
      if (std::find(e.labels.begin(), e.labels.end(), l) == e.labels.end()) e.labels.push_back(std::move(l));
    }
    if (e.scene.nodes.empty() && warnings) warnings->push_back("image '" + e.image_id + "' has no detected objects");
    if (!by_id.emplace(e.image_id, std::move(e)).second)
      throw SchemaError(doc.image_id, "duplicate image id");
  }

  std::vector<std::string> ids;
  for (const auto& [id, e] : by_id) ids.push_back(id);
  Rng rng(options.seed, "split");
  rng.shuffle(ids);
  const auto sizes = split_sizes(ids.size(), options.train_fraction, options.val_fraction);

  Dataset data;
  data.labels = labels;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Example& e = by_id.at(ids[i]);
    if (i < sizes.train) data.train.push_back(std::move(e));
    else if (i < sizes.train + sizes.val) data.val.push_back(std::move(e));
    else data.test.push_back(std::move(e));
  }
  return data;
}

std::vector<SceneDocument> load_scene_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("scene-graph directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SceneDocument> docs;
  for (const auto& f : files) {
    SceneDocument d = parse_scene_graph(read_json(f.string()), f.string());
    if (d.image_id.empty()) d.image_id = f.stem().string();
    docs.push_back(std::move(d));
  }
  return docs;
}

json example_to_json(const Example& e) {
  return {{"image_id", e.image_id},
          {"labels", e.labels},
          {"scene", graph_to_json(e.scene)},
          {"knowledge", graph_to_json(e.knowledge)}};
}

Example example_from_json(const json& j, const std::string& source) {
  if (!j.is_object()) throw SchemaError(source, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "image_id" && it.key() != "labels" && it.key() != "scene" && it.key() != "knowledge")
      throw SchemaError(source + "." + it.key(), "unknown field");
  Example e;
  try {
    e.image_id = j.at("image_id").get<std::string>();
    e.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw SchemaError(source, ex.what());
  }
  if (!j.contains("scene")) throw SchemaError(source + ".scene", "missing field");
  if (!j.contains("knowledge")) throw SchemaError(source + ".knowledge", "missing field");
  e.scene = validate_graph(graph_from_json(j["scene"], GraphKind::Scene, source + ".scene"));
  e.knowledge = validate_graph(graph_from_json(j["knowledge"], GraphKind::Knowledge, source + ".knowledge"));
  return e;
}

void write_bundle(const std::string& dir, const Dataset& data, std::uint64_t seed) {
  fs::create_directories(fs::path(dir) / "examples");
  std::string labels;
  for (const auto& l : data.labels) labels += l + "\n";
  write_text((fs::path(dir) / "labels.txt").string(), labels);

  std::set<std::string> stems;
  json splits = {{"seed", seed}, {"train", json::array()}, {"val", json::array()}, {"test", json::array()}};
  auto emit = [&](const std::vector<Example>& part, const char* name) {
    for (const auto& e : part) {
      const std::string stem = file_stem_for(e.image_id);
      if (!stems.insert(stem).second)
        throw ConfigError("image ids collide on file name '" + stem + "' (" + e.image_id + ")");
      write_text((fs::path(dir) / "examples" / (stem + ".json")).string(), example_to_json(e).dump(1) + "\n");
      splits[name].push_back(e.image_id);
    }
  };
  emit(data.train, "train");
  emit(data.val, "val");
  emit(data.test, "test");
  write_text((fs::path(dir) / "splits.json").string(), splits.dump(1) + "\n");
}

Dataset read_bundle(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("bundle directory '" + dir + "' does not exist");
  Dataset data;
  data.labels = load_labels((fs::path(dir) / "labels.txt").string());
  const std::string splits_path = (fs::path(dir) / "splits.json").string();
  const json splits = read_json(splits_path);
  auto load_part = [&](const char* name, std::vector<Example>& out) {
    if (!splits.contains(name) || !splits[name].is_array()) throw SchemaError(splits_path + ":$." + name, "missing split");
    for (const auto& id : splits[name]) {
      const std::string path = (fs::path(dir) / "examples" / (file_stem_for(id.get<std::string>()) + ".json")).string();
      Example e = example_from_json(read_json(path), path);
      for (const auto& l : e.labels)
        if (std::find(data.labels.begin(), data.labels.end(), l) == data.labels.end())
          throw SchemaError(path + ":$.labels", "label '" + l + "' not in labels.txt");
      out.push_back(std::move(e));
    }
  };
  load_part("train", data.train);
  load_part("val", data.val);
  load_part("test", data.test);
  return data;
}

std::string content_hash(const std::string& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + file + "'");
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  };
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      for (unsigned char c : fs::relative(f, path).generic_string()) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      feed(f.string());
    }
  } else {
    feed(path);
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace skg
