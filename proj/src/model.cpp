#include "skg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "skg/errors.hpp"
#include "skg/rng.hpp"

namespace skg {

using nlohmann::json;

// ---------------------------------------------------------------- enums

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::Concat: return "concat";
    case FusionMode::Attention: return "attention";
    case FusionMode::AttentionLearned: return "attention_learned";
  }
  return "?";
}

const char* to_string(Nonlinearity n) { return n == Nonlinearity::Relu ? "relu" : "sigmoid"; }

const char* to_string(GraphMode m) {
  switch (m) {
    case GraphMode::Both: return "both";
    case GraphMode::SceneOnly: return "sg_only";
    case GraphMode::KnowledgeOnly: return "kg_only";
  }
  return "?";
}

const char* to_string(HeadKind h) { return h == HeadKind::Softmax ? "softmax" : "sigmoid"; }

FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "concat") return FusionMode::Concat;
  if (s == "attention") return FusionMode::Attention;
  if (s == "attention_learned") return FusionMode::AttentionLearned;
  throw ConfigError("unknown fusion mode '" + s + "' (concat | attention | attention_learned)");
}

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "relu") return Nonlinearity::Relu;
  if (s == "sigmoid") return Nonlinearity::Sigmoid;
  throw ConfigError("unknown nonlinearity '" + s + "' (relu | sigmoid)");
}

GraphMode parse_graph_mode(const std::string& s) {
  if (s == "both") return GraphMode::Both;
  if (s == "sg_only") return GraphMode::SceneOnly;
  if (s == "kg_only") return GraphMode::KnowledgeOnly;
  throw ConfigError("unknown graph mode '" + s + "' (both | sg_only | kg_only)");
}

HeadKind parse_head_kind(const std::string& s) {
  if (s == "softmax") return HeadKind::Softmax;
  if (s == "sigmoid") return HeadKind::Sigmoid;
  throw ConfigError("unknown head '" + s + "' (softmax | sigmoid)");
}

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (gcn_layers < 1) throw ConfigError("gcn_layers must be >= 1");
  if (num_labels < 2) throw ConfigError("num_labels must be >= 2");
  if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("embed_dim and hidden_dim must be >= 1");
  for (std::size_t w : mlp_widths())
    if (w < 1) throw ConfigError("mlp hidden widths must be >= 1");
}

std::vector<std::size_t> ModelConfig::mlp_widths() const {
  return mlp_hidden ? *mlp_hidden : std::vector<std::size_t>{hidden_dim};
}

std::size_t ModelConfig::fusion_width() const {
  return fusion == FusionMode::Concat ? 3 * hidden_dim : hidden_dim;
}

std::size_t ModelConfig::tower_count() const {
  return (graphs == GraphMode::Both && !share_towers) ? 2 : 1;
}

json config_to_json(const ModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"gcn_layers", c.gcn_layers},
          {"num_labels", c.num_labels},
          {"fusion", to_string(c.fusion)},
          {"nonlinearity", to_string(c.nonlinearity)},
          {"share_towers", c.share_towers},
          {"mlp_hidden", c.mlp_widths()},
          {"graphs", to_string(c.graphs)},
          {"head", to_string(c.head)},
          {"trainable_embeddings", c.trainable_embeddings},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.gcn_layers = j.at("gcn_layers").get<std::size_t>();
    c.num_labels = j.at("num_labels").get<std::size_t>();
    c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
    c.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
    c.share_towers = j.at("share_towers").get<bool>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
    c.graphs = parse_graph_mode(j.at("graphs").get<std::string>());
    c.head = parse_head_kind(j.at("head").get<std::string>());
    c.trainable_embeddings = j.at("trainable_embeddings").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t param_count(const ModelConfig& c, std::size_t vocab_size) {
  const std::size_t h = c.hidden_dim;
  const std::size_t tower = h * 2 * c.embed_dim + c.gcn_layers * h * h;
  std::size_t total = c.tower_count() * tower;
  if (c.fusion == FusionMode::AttentionLearned) total += h;
  std::size_t in = c.fusion_width();
  for (std::size_t w : c.mlp_widths()) {
    total += w * in + w;
    in = w;
  }
  total += c.num_labels * in + c.num_labels;
  if (c.trainable_embeddings) total += vocab_size * c.embed_dim;
  return total;
}

// ---------------------------------------------------------------- graph inputs

namespace {

// Adds weight * (phrase mean) of `phrase` to the open row.
void add_phrase(SparseRows& s, const EmbeddingTable& table, std::string_view phrase, double weight) {
  const auto rows = phrase_rows(table, phrase);
  if (rows.empty()) return;
  const double w = weight / static_cast<double>(rows.size());
  for (std::size_t r : rows) s.add(r, w);
}

void add_node(SparseRows& s, const EmbeddingTable& table, const GraphNode& node, double weight) {
  const double w = weight / static_cast<double>(1 + node.attributes.size());
  add_phrase(s, table, node.object, w);
  for (const auto& a : node.attributes) add_phrase(s, table, a, w);
}

std::vector<std::vector<const GraphEdge*>> in_edges(const LabeledGraph& g) {
  std::vector<std::vector<const GraphEdge*>> in(g.nodes.size());
  for (const auto& e : g.edges) {
    if (e.src >= g.nodes.size() || e.dst >= g.nodes.size())
      throw ValidationError("edge endpoint out of range for " + std::to_string(g.nodes.size()) + " nodes");
    in[e.dst].push_back(&e);
  }
  return in;
}

}  // namespace

std::shared_ptr<const SparseRows> in_neighbor_mean(const LabeledGraph& g) {
  auto s = std::make_shared<SparseRows>();
  s->in_rows = g.nodes.size();
  const auto in = in_edges(g);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (in[i].empty()) {
      s->add(i, 1.0);
    } else {
      const double w = 1.0 / static_cast<double>(in[i].size());
      for (const GraphEdge* e : in[i]) s->add(e->src, w);
    }
    s->end_row();
  }
  return s;
}

Tensor node_feature(const GraphNode& node, const EmbeddingTable& table) {
  Tensor x({table.dim()});
  const double k = 1.0 / static_cast<double>(1 + node.attributes.size());
  auto add = [&](const Tensor& v) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += k * v[i];
  };
  add(embed_phrase(table, node.object));
  for (const auto& a : node.attributes) add(embed_phrase(table, a));
  return x;
}

Tensor relation_feature(std::string_view relation, const EmbeddingTable& table) {
  return embed_phrase(table, relation_phrase(relation));
}

GraphInputs graph_inputs(const LabeledGraph& g, const EmbeddingTable& table) {
  GraphInputs out;
  out.node_count = g.nodes.size();
  out.adjacency = in_neighbor_mean(g);

  auto node_words = std::make_shared<SparseRows>();
  auto relation_words = std::make_shared<SparseRows>();
  node_words->in_rows = relation_words->in_rows = table.size();
  const auto in = in_edges(g);
  const std::string self_phrase = relation_phrase(kSelfRelation);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (in[i].empty()) {
      add_node(*node_words, table, g.nodes[i], 1.0);
      add_phrase(*relation_words, table, self_phrase, 1.0);
    } else {
      const double w = 1.0 / static_cast<double>(in[i].size());
      for (const GraphEdge* e : in[i]) {
        add_node(*node_words, table, g.nodes[e->src], w);
        add_phrase(*relation_words, table, relation_phrase(e->relation), w);
      }
    }
    node_words->end_row();
    relation_words->end_row();
  }

  const std::size_t n = g.nodes.size(), d = table.dim();
  Tensor xs({n, d}), es({n, d});
  kernels::spmm(*node_words, table.data(), xs.values(), d);
  kernels::spmm(*relation_words, table.data(), es.values(), d);
  out.encoder_input = Tensor({n, 2 * d});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(xs.row(i).data(), d, out.encoder_input.row(i).data());
    std::copy_n(es.row(i).data(), d, out.encoder_input.row(i).data() + d);
  }
  out.node_words = std::move(node_words);
  out.relation_words = std::move(relation_words);
  return out;
}

GraphInputs stack_inputs(const std::vector<const GraphInputs*>& parts) {
  if (parts.size() == 1) return *parts.front();
  std::size_t n = 0, width = 0, table_rows = 0;
  for (const GraphInputs* p : parts) {
    n += p->node_count;
    width = std::max(width, p->encoder_input.cols());
    table_rows = std::max(table_rows, p->node_words->in_rows);
  }
  auto adjacency = std::make_shared<SparseRows>();
  auto node_words = std::make_shared<SparseRows>();
  auto relation_words = std::make_shared<SparseRows>();
  adjacency->in_rows = n;
  node_words->in_rows = relation_words->in_rows = table_rows;
  GraphInputs out;
  out.node_count = n;
  out.encoder_input = Tensor({n, width});
  std::size_t base = 0;
  auto append = [](SparseRows& dst, const SparseRows& src, std::size_t shift) {
    for (std::size_t r = 0; r < src.out_rows; ++r) {
      for (std::size_t k = src.offsets[r]; k < src.offsets[r + 1]; ++k) dst.add(src.indices[k] + shift, src.weights[k]);
      dst.end_row();
    }
  };
  for (const GraphInputs* p : parts) {
    append(*adjacency, *p->adjacency, base);
    append(*node_words, *p->node_words, 0);
    append(*relation_words, *p->relation_words, 0);
    const auto& src = p->encoder_input.values();
    std::copy(src.begin(), src.end(), out.encoder_input.values().begin() + static_cast<std::ptrdiff_t>(base * width));
    base += p->node_count;
  }
  out.adjacency = std::move(adjacency);
  out.node_words = std::move(node_words);
  out.relation_words = std::move(relation_words);
  return out;
}

std::shared_ptr<const SparseRows> segment_sum(const std::vector<const GraphInputs*>& parts) {
  auto s = std::make_shared<SparseRows>();
  std::size_t base = 0;
  for (const GraphInputs* p : parts) {
    for (std::size_t i = 0; i < p->node_count; ++i) s->add(base + i, 1.0);
    s->end_row();
    base += p->node_count;
  }
  s->in_rows = base;
  return s;
}

// ---------------------------------------------------------------- tape blocks

Var apply_nonlinearity(Var x, Nonlinearity n) { return n == Nonlinearity::Relu ? relu(x) : sigmoid(x); }

Var encoder_input(Tape& tape, const GraphInputs& in, std::optional<Var> trainable_table) {
  if (!trainable_table) return tape.constant(in.encoder_input);
  return concat_cols({sparse_rows(in.node_words, *trainable_table), sparse_rows(in.relation_words, *trainable_table)});
}

Var encode_nodes(Var input, Var w_enc, Nonlinearity n) { return apply_nonlinearity(linear(input, w_enc), n); }

Var gcn_layer(Var states, const std::shared_ptr<const SparseRows>& adjacency, Var w, Nonlinearity n) {
  if (adjacency->in_rows != states.rows())
    throw DimensionError("gcn_layer: " + std::to_string(states.rows()) + " state rows for a " +
                         std::to_string(adjacency->in_rows) + "-node graph");
  return apply_nonlinearity(sparse_rows(adjacency, linear(states, w)), n);
}

Var readout_sum(Var states) {
  auto s = std::make_shared<SparseRows>();
  s->in_rows = states.rows();
  for (std::size_t i = 0; i < states.rows(); ++i) s->add(i, 1.0);
  s->end_row();
  return sparse_rows(std::move(s), states);
}

Var fuse_concat(Var kg, Var sg) {
  if (kg.value().size() != sg.value().size())
    throw DimensionError("fuse_concat: " + shape_string(kg.value().shape()) + " vs " + shape_string(sg.value().shape()));
  return concat_cols({kg, sg, mul(kg, sg)});
}

AttentionFusion attention_fuse(Var kg, Var sg, std::optional<Var> score) {
  if (kg.value().size() != sg.value().size())
    throw DimensionError("attention_fuse: " + shape_string(kg.value().shape()) + " vs " +
                         shape_string(sg.value().shape()));
  Var s_kg = score ? linear(kg, *score) : squared_norm(kg);
  Var s_sg = score ? linear(sg, *score) : squared_norm(sg);
  Var alpha = softmax(concat_cols({s_kg, s_sg}));
  Var fused = add(scale_by(kg, pick(alpha, 0)), scale_by(sg, pick(alpha, 1)));
  return {fused, alpha};
}

AttentionFusion attention_fuse_rows(Var kg, Var sg, std::optional<Var> score) {
  if (kg.rows() != sg.rows() || kg.cols() != sg.cols())
    throw DimensionError("attention_fuse: " + shape_string(kg.value().shape()) + " vs " +
                         shape_string(sg.value().shape()));
  Tape& tape = *kg.tape;
  const std::size_t d = kg.cols();
  Var ones_row = tape.constant(Tensor({1, d}, 1.0));
  auto row_score = [&](Var v) { return score ? linear(v, *score) : linear(mul(v, v), ones_row); };
  Var alpha = softmax(concat_cols({row_score(kg), row_score(sg)}));
  // Column c of alpha broadcast across d columns.
  Var spread = tape.constant(Tensor({d, 1}, 1.0));
  auto weight = [&](std::size_t c) {
    Tensor e({1, 2});
    e[c] = 1.0;
    return linear(linear(alpha, tape.constant(std::move(e))), spread);
  };
  Var fused = add(mul(kg, weight(0)), mul(sg, weight(1)));
  return {fused, alpha};
}

Var mlp_logits(Var fused, const std::vector<MlpLayer>& layers, Nonlinearity n) {
  if (layers.empty()) throw ConfigError("classifier has no layers");
  Var h = fused;
  if (h.cols() != layers.front().weight.cols())
    throw DimensionError("classify: fused width " + std::to_string(h.cols()) + " but MLP expects " +
                         std::to_string(layers.front().weight.cols()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = add_bias(linear(h, layers[i].weight), layers[i].bias);
    if (i + 1 < layers.size()) h = apply_nonlinearity(h, n);
  }
  return h;
}

Var classify(Var fused, const std::vector<MlpLayer>& layers, Nonlinearity n, HeadKind head) {
  Var logits = mlp_logits(fused, layers, n);
  return head == HeadKind::Softmax ? softmax(logits) : sigmoid(logits);
}

Tensor fuse_concat(const Tensor& kg, const Tensor& sg) {
  Tape tape;
  return fuse_concat(tape.constant(kg), tape.constant(sg)).value().reshaped({3 * kg.size()});
}

std::pair<Tensor, Tensor> attention_fuse(const Tensor& kg, const Tensor& sg) {
  Tape tape;
  auto r = attention_fuse(tape.constant(kg), tape.constant(sg));
  return {r.fused.value().reshaped({kg.size()}), r.weights.value().reshaped({2})};
}

// ---------------------------------------------------------------- model

void initialize_params(ParamStore& params, std::uint64_t seed) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const bool is_bias = p.name.size() >= 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
    if (is_bias || p.name == "embedding.table") continue;
    const double fan_out = static_cast<double>(p.value.rows());
    const double fan_in = static_cast<double>(p.value.cols());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Rng rng(seed, "init/" + p.name);
    for (double& v : p.value.values()) v = rng.uniform(-limit, limit);
  }
}

SymbolModel::SymbolModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table)
    : config_(std::move(config)), table_(std::move(table)) {
  config_.validate();
  if (!table_) throw ConfigError("model requires an embedding table");
  if (table_->dim() != config_.embed_dim)
    throw ConfigError("embedding table width " + std::to_string(table_->dim()) + " != embed_dim " +
                      std::to_string(config_.embed_dim));
  const std::size_t h = config_.hidden_dim;

  auto make_tower = [&](const std::string& prefix) {
    TowerNames names{prefix + ".enc", {}};
    params_.add(names.enc, Tensor({h, 2 * config_.embed_dim}));
    for (std::size_t l = 1; l <= config_.gcn_layers; ++l) {
      names.gcn.push_back(prefix + ".gcn" + std::to_string(l));
      params_.add(names.gcn.back(), Tensor({h, h}));
    }
    return names;
  };
  const bool scene = config_.graphs != GraphMode::KnowledgeOnly;
  const bool knowledge = config_.graphs != GraphMode::SceneOnly;
  if (scene && knowledge && config_.share_towers) {
    scene_tower_ = knowledge_tower_ = make_tower("tower");
  } else {
    if (scene) scene_tower_ = make_tower("sg");
    if (knowledge) knowledge_tower_ = make_tower("kg");
  }
  if (config_.fusion == FusionMode::AttentionLearned) params_.add("attention.score", Tensor({1, h}));

  std::size_t in = config_.fusion_width();
  const auto widths = config_.mlp_widths();
  for (std::size_t i = 0; i <= widths.size(); ++i) {
    const bool last = i == widths.size();
    const std::size_t out = last ? config_.num_labels : widths[i];
    const std::string prefix = last ? "mlp.out" : "mlp." + std::to_string(i);
    params_.add(prefix + ".weight", Tensor({out, in}));
    params_.add(prefix + ".bias", Tensor({1, out}));
    mlp_names_.emplace_back(prefix + ".weight", prefix + ".bias");
    in = out;
  }
  if (config_.trainable_embeddings) params_.add("embedding.table", table_->as_matrix());

  initialize_params(params_, config_.seed);
}

PreparedExample SymbolModel::prepare(const Example& example, const std::vector<std::string>& label_names) const {
  PreparedExample p;
  p.image_id = example.image_id;
  p.scene = graph_inputs(example.scene, *table_);
  p.knowledge = graph_inputs(example.knowledge, *table_);
  for (const auto& label : example.labels) {
    auto it = std::find(label_names.begin(), label_names.end(), label);
    if (it == label_names.end()) throw ConfigError("example '" + example.image_id + "' has unknown label '" + label + "'");
    const auto id = static_cast<std::size_t>(it - label_names.begin());
    if (std::find(p.label_ids.begin(), p.label_ids.end(), id) == p.label_ids.end()) p.label_ids.push_back(id);
  }
  std::sort(p.label_ids.begin(), p.label_ids.end());
  return p;
}

Var SymbolModel::run_tower(Tape& tape, const std::vector<const GraphInputs*>& parts, const TowerNames& names,
                           std::optional<Var> table, std::vector<std::vector<double>>& norms) {
  const GraphInputs in = stack_inputs(parts);
  Var states = encode_nodes(encoder_input(tape, in, table), tape.param(params_.at(names.enc)), config_.nonlinearity);
  for (const auto& w : names.gcn) states = gcn_layer(states, in.adjacency, tape.param(params_.at(w)), config_.nonlinearity);
  const Tensor& v = states.value();
  norms.assign(parts.size(), {});
  std::size_t row = 0;
  for (std::size_t b = 0; b < parts.size(); ++b)
    for (std::size_t i = 0; i < parts[b]->node_count; ++i, ++row) {
      double s = 0.0;
      for (double x : v.row(row)) s += x * x;
      norms[b].push_back(std::sqrt(s));
    }
  return sparse_rows(segment_sum(parts), states);
}

BatchResult SymbolModel::forward_batch(Tape& tape, const std::vector<const PreparedExample*>& batch) {
  if (batch.empty()) throw ConfigError("forward_batch: empty batch");
  const std::size_t n = batch.size(), h = config_.hidden_dim;
  BatchResult result;
  result.diagnostics.resize(n);
  std::optional<Var> table;
  if (config_.trainable_embeddings) table = tape.param(params_.at("embedding.table"));

  std::vector<const GraphInputs*> scenes, knowledge;
  for (const PreparedExample* ex : batch) {
    scenes.push_back(&ex->scene);
    knowledge.push_back(&ex->knowledge);
  }
  std::vector<std::vector<double>> norms_sg(n), norms_kg(n);
  Var sg = scene_tower_ ? run_tower(tape, scenes, *scene_tower_, table, norms_sg) : tape.constant(Tensor({n, h}));
  Var kg = knowledge_tower_ ? run_tower(tape, knowledge, *knowledge_tower_, table, norms_kg)
                            : tape.constant(Tensor({n, h}));

  Var fused = kg;
  std::optional<Var> alpha;
  switch (config_.fusion) {
    case FusionMode::Concat:
      fused = fuse_concat(kg, sg);
      break;
    case FusionMode::Attention:
    case FusionMode::AttentionLearned: {
      std::optional<Var> score;
      if (config_.fusion == FusionMode::AttentionLearned) score = tape.param(params_.at("attention.score"));
      auto att = attention_fuse_rows(kg, sg, score);
      fused = att.fused;
      alpha = att.weights;
      break;
    }
  }

  for (std::size_t b = 0; b < n; ++b) {
    Diagnostics& d = result.diagnostics[b];
    d.node_norms_sg = std::move(norms_sg[b]);
    d.node_norms_kg = std::move(norms_kg[b]);
    d.readout_sg = Tensor({1, h});
    d.readout_kg = Tensor({1, h});
    std::copy_n(sg.value().row(b).data(), h, d.readout_sg.values().begin());
    std::copy_n(kg.value().row(b).data(), h, d.readout_kg.values().begin());
    if (alpha) d.alpha = std::make_pair(alpha->value().row(b)[0], alpha->value().row(b)[1]);
  }

  std::vector<MlpLayer> layers;
  for (const auto& [w, b] : mlp_names_) layers.push_back({tape.param(params_.at(w)), tape.param(params_.at(b))});
  result.probs = classify(fused, layers, config_.nonlinearity, config_.head);
  return result;
}

ForwardResult SymbolModel::forward(Tape& tape, const PreparedExample& example) {
  BatchResult r = forward_batch(tape, {&example});
  return {r.probs, std::move(r.diagnostics.front())};
}

Tensor SymbolModel::predict(const PreparedExample& example) {
  Tape tape;
  const Tensor& p = forward(tape, example).probs.value();
  return p.reshaped({p.size()});
}

Tensor SymbolModel::predict_batch(const std::vector<const PreparedExample*>& batch) {
  Tape tape;
  return forward_batch(tape, batch).probs.value();
}

// ---------------------------------------------------------------- checkpoints

namespace {
constexpr const char* kCheckpointMagic = "skgsym-checkpoint 1";
}

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::vector<std::string>& labels,
                     const ParamStore& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out << kCheckpointMagic << '\n';
  out << "config " << config_to_json(config).dump() << '\n';
  out << "labels " << json(labels).dump() << '\n';
  out << "params " << params.size() << '\n';
  char buf[64];
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    out << "param " << p.name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%a", p.value[k]);
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::size_t lineno = 0;
  auto next_line = [&](std::string& line) {
    if (!std::getline(in, line)) throw ParseError(path, lineno + 1, "unexpected end of checkpoint");
    ++lineno;
  };
  auto keyword_rest = [&](const std::string& line, const std::string& key) {
    if (line.rfind(key + " ", 0) != 0) throw ParseError(path, lineno, "expected '" + key + "'");
    return line.substr(key.size() + 1);
  };
  std::string line;
  next_line(line);
  if (line != kCheckpointMagic) throw ParseError(path, lineno, "not a checkpoint file");
  Checkpoint ckpt;
  try {
    next_line(line);
    ckpt.config = config_from_json(json::parse(keyword_rest(line, "config")));
    next_line(line);
    ckpt.labels = json::parse(keyword_rest(line, "labels")).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ParseError(path, lineno, e.what());
  }
  next_line(line);
  const std::size_t count = std::stoul(keyword_rest(line, "params"));
  for (std::size_t i = 0; i < count; ++i) {
    next_line(line);
    std::istringstream header(keyword_rest(line, "param"));
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(header >> name >> rows >> cols)) throw ParseError(path, lineno, "malformed parameter header");
    next_line(line);
    std::vector<double> values;
    values.reserve(rows * cols);
    const char* p = line.c_str();
    char* end = nullptr;
    for (std::size_t k = 0; k < rows * cols; ++k) {
      const double v = std::strtod(p, &end);
      if (end == p) throw ParseError(path, lineno, "expected " + std::to_string(rows * cols) + " values for " + name);
      values.push_back(v);
      p = end;
    }
    ckpt.tensors.emplace_back(name, Tensor({rows, cols}, std::move(values)));
  }
  return ckpt;
}

void restore_params(ParamStore& params, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != params.size())
    throw ConfigError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    Parameter& p = params.at(name);
    if (p.value.rows() != t.rows() || p.value.cols() != t.cols())
      throw DimensionError("checkpoint tensor " + name + " " + shape_string(t.shape()) + " vs model " +
                           shape_string(p.value.shape()));
    std::copy(t.values().begin(), t.values().end(), p.value.values().begin());
  }
}

}  // namespace skg
