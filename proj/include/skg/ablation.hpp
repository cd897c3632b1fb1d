#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "skg/training.hpp"

namespace skg {

struct AblationRun {
  std::string variant;
  ModelConfig config;
  RunLog log;
  double final_val_macro_f = 0.0;
  std::size_t param_count = 0;
};

// One model per depth, every other setting (seed included) shared.
std::vector<AblationRun> ablate_layers(const std::vector<std::size_t>& depths, const ModelConfig& base,
                                       const TrainConfig& train_config, const Dataset& data,
                                       std::shared_ptr<const EmbeddingTable> table);

// sg_only, kg_only and both, in that order unless `modes` says otherwise.
std::vector<AblationRun> ablate_graphs(const ModelConfig& base, const TrainConfig& train_config, const Dataset& data,
                                       std::shared_ptr<const EmbeddingTable> table,
                                       const std::vector<GraphMode>& modes = {GraphMode::SceneOnly,
                                                                              GraphMode::KnowledgeOnly,
                                                                              GraphMode::Both});

// variant,epoch,val_macro_f
void write_ablation_csv(std::ostream& out, const std::vector<AblationRun>& runs);

}  // namespace skg
