#include "skg/ablation.hpp"

#include <cstdio>
#include <ostream>

#include "skg/errors.hpp"

namespace skg {

namespace {

AblationRun run_variant(std::string variant, const ModelConfig& config, const TrainConfig& train_config,
                        const Dataset& data, const std::shared_ptr<const EmbeddingTable>& table) {
  SymbolModel model(config, table);
  AblationRun run;
  run.variant = std::move(variant);
  run.config = config;
  run.param_count = model.params().scalar_count();
  run.log = train(model, data, train_config).log;
  if (!run.log.epochs.empty()) run.final_val_macro_f = run.log.epochs.back().val_macro_f;
  return run;
}

}  // namespace

std::vector<AblationRun> ablate_layers(const std::vector<std::size_t>& depths, const ModelConfig& base,
                                       const TrainConfig& train_config, const Dataset& data,
                                       std::shared_ptr<const EmbeddingTable> table) {
  std::vector<AblationRun> runs;
  for (std::size_t k : depths) {
    if (k < 1) throw ConfigError("layer ablation depths must be >= 1");
    ModelConfig c = base;
    c.gcn_layers = k;
    runs.push_back(run_variant("K=" + std::to_string(k), c, train_config, data, table));
  }
  return runs;
}

std::vector<AblationRun> ablate_graphs(const ModelConfig& base, const TrainConfig& train_config, const Dataset& data,
                                       std::shared_ptr<const EmbeddingTable> table, const std::vector<GraphMode>& modes) {
  std::vector<AblationRun> runs;
  for (GraphMode mode : modes) {
    ModelConfig c = base;
    c.graphs = mode;
    runs.push_back(run_variant(to_string(mode), c, train_config, data, table));
  }
  return runs;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRun>& runs) {
  out << "variant,epoch,val_macro_f\n";
  char buf[64];
  for (const auto& run : runs)
    for (const auto& r : run.log.epochs) {
      std::snprintf(buf, sizeof buf, ",%zu,%.4f\n", r.epoch, r.val_macro_f);
      out << run.variant << buf;
    }
}

}  // namespace skg
