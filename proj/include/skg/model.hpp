#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "skg/autodiff.hpp"
#include "skg/embeddings.hpp"
#include "skg/graphs.hpp"

namespace skg {

enum class FusionMode { Concat, Attention, AttentionLearned };
enum class Nonlinearity { Relu, Sigmoid };
enum class GraphMode { Both, SceneOnly, KnowledgeOnly };
// Softmax head with soft-target cross-entropy, or independent sigmoids with
// binary cross-entropy.
enum class HeadKind { Softmax, Sigmoid };

const char* to_string(FusionMode m);
const char* to_string(Nonlinearity n);
const char* to_string(GraphMode m);
const char* to_string(HeadKind h);
FusionMode parse_fusion_mode(const std::string& s);
Nonlinearity parse_nonlinearity(const std::string& s);
GraphMode parse_graph_mode(const std::string& s);
HeadKind parse_head_kind(const std::string& s);

// Relation token used for the self-loop given to nodes without in-edges.
inline constexpr const char* kSelfRelation = "self";

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 512;
  std::size_t gcn_layers = 3;
  std::size_t num_labels = 2;
  FusionMode fusion = FusionMode::Concat;
  Nonlinearity nonlinearity = Nonlinearity::Relu;
  bool share_towers = false;
  // Hidden widths of the classifier; unset means one layer of hidden_dim.
  std::optional<std::vector<std::size_t>> mlp_hidden;
  GraphMode graphs = GraphMode::Both;
  HeadKind head = HeadKind::Softmax;
  bool trainable_embeddings = false;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::size_t> mlp_widths() const;
  std::size_t fusion_width() const;
  std::size_t tower_count() const;
};

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

// Exact trainable-scalar count. `vocab_size` only matters with trainable
// embeddings.
std::size_t param_count(const ModelConfig& config, std::size_t vocab_size = 0);

struct Example {
  std::string image_id;
  LabeledGraph scene;
  LabeledGraph knowledge;
  std::vector<std::string> labels;
};

// Row-normalized in-neighbor averaging operator of a canonical graph. Every
// in-edge of node i carries weight 1/indeg(i); nodes with no in-edge get a
// self-loop of weight 1.
std::shared_ptr<const SparseRows> in_neighbor_mean(const LabeledGraph& g);

// Static per-graph operators derived from the graph and the embedding table.
struct GraphInputs {
  std::size_t node_count = 0;
  std::shared_ptr<const SparseRows> adjacency;
  // Rows of the embedding table mixed into the averaged node input x_j and the
  // averaged relation input e_ij, per destination node.
  std::shared_ptr<const SparseRows> node_words;
  std::shared_ptr<const SparseRows> relation_words;
  // [mean x_j ; mean e_ij] per node, precomputed for a frozen table.
  Tensor encoder_input;
};

GraphInputs graph_inputs(const LabeledGraph& g, const EmbeddingTable& table);

// Disjoint union of several graphs: block-diagonal adjacency, stacked rows.
GraphInputs stack_inputs(const std::vector<const GraphInputs*>& parts);
// [parts x total nodes] operator summing each part's node rows.
std::shared_ptr<const SparseRows> segment_sum(const std::vector<const GraphInputs*>& parts);

// Node feature x_j: mean over the object phrase and each attribute phrase.
Tensor node_feature(const GraphNode& node, const EmbeddingTable& table);
Tensor relation_feature(std::string_view relation, const EmbeddingTable& table);

// Building blocks on the tape.
Var apply_nonlinearity(Var x, Nonlinearity n);
// [n x 2E] encoder input for one graph.
Var encoder_input(Tape& tape, const GraphInputs& in, std::optional<Var> trainable_table);
// v0 = sigma(input * W_enc^T); W_enc is [hidden x 2E].
Var encode_nodes(Var input, Var w_enc, Nonlinearity n);
// v_l = sigma(A * (v_{l-1} * W^T)) with A the in-neighbor mean operator.
Var gcn_layer(Var states, const std::shared_ptr<const SparseRows>& adjacency, Var w, Nonlinearity n);
// Column sum over node rows; [1 x d] zeros when there are no rows.
Var readout_sum(Var states);
// [kg ; sg ; kg * sg]
Var fuse_concat(Var kg, Var sg);

struct AttentionFusion {
  Var fused;
  Var weights;  // [1 x 2]: (alpha_kg, alpha_sg)
};
// Scores are squared norms, or w^T v_g when `score` is given.
AttentionFusion attention_fuse(Var kg, Var sg, std::optional<Var> score = std::nullopt);
// Same fusion applied independently to every row of [B x d] inputs; weights
// are [B x 2].
AttentionFusion attention_fuse_rows(Var kg, Var sg, std::optional<Var> score = std::nullopt);

struct MlpLayer {
  Var weight;
  Var bias;
};
Var mlp_logits(Var fused, const std::vector<MlpLayer>& layers, Nonlinearity n);
// softmax (or sigmoid) of the MLP output.
Var classify(Var fused, const std::vector<MlpLayer>& layers, Nonlinearity n, HeadKind head = HeadKind::Softmax);

// Untraced convenience versions on plain tensors.
Tensor fuse_concat(const Tensor& kg, const Tensor& sg);
std::pair<Tensor, Tensor> attention_fuse(const Tensor& kg, const Tensor& sg);

struct Diagnostics {
  std::optional<std::pair<double, double>> alpha;  // (kg, sg)
  Tensor readout_kg;
  Tensor readout_sg;
  std::vector<double> node_norms_kg;
  std::vector<double> node_norms_sg;
};

struct ForwardResult {
  Var probs;
  Diagnostics diagnostics;
};

// One row of probabilities per example.
struct BatchResult {
  Var probs;
  std::vector<Diagnostics> diagnostics;
};

// Example prepared against one embedding table and label list.
struct PreparedExample {
  std::string image_id;
  GraphInputs scene;
  GraphInputs knowledge;
  std::vector<std::size_t> label_ids;
};

class SymbolModel {
 public:
  // Builds parameters and initializes them from config.seed.
  SymbolModel(ModelConfig config, std::shared_ptr<const EmbeddingTable> table);

  const ModelConfig& config() const { return config_; }
  const EmbeddingTable& table() const { return *table_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  PreparedExample prepare(const Example& example, const std::vector<std::string>& label_names) const;
  ForwardResult forward(Tape& tape, const PreparedExample& example);
  // All examples run as one disjoint graph; rows of probs follow `batch`.
  BatchResult forward_batch(Tape& tape, const std::vector<const PreparedExample*>& batch);
  // Untraced probabilities.
  Tensor predict(const PreparedExample& example);
  // [B x C]
  Tensor predict_batch(const std::vector<const PreparedExample*>& batch);

  std::size_t expected_param_count() const { return param_count(config_, table_->size()); }

 private:
  struct TowerNames {
    std::string enc;
    std::vector<std::string> gcn;
  };
  Var run_tower(Tape& tape, const std::vector<const GraphInputs*>& parts, const TowerNames& names,
                std::optional<Var> table, std::vector<std::vector<double>>& norms);

  ModelConfig config_;
  std::shared_ptr<const EmbeddingTable> table_;
  ParamStore params_;
  std::optional<TowerNames> scene_tower_;
  std::optional<TowerNames> knowledge_tower_;
  std::vector<std::pair<std::string, std::string>> mlp_names_;
};

// Glorot-uniform weights and zero biases drawn from a seeded stream.
void initialize_params(ParamStore& params, std::uint64_t seed);

// Text checkpoint: config, label names and every parameter tensor as
// hexadecimal floats (bit-exact round trip).
void save_checkpoint(const std::string& path, const ModelConfig& config, const std::vector<std::string>& labels,
                     const ParamStore& params);
struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> labels;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
Checkpoint load_checkpoint(const std::string& path);
// Copies checkpoint tensors into `params`; names and shapes must match.
void restore_params(ParamStore& params, const Checkpoint& ckpt);

}  // namespace skg
