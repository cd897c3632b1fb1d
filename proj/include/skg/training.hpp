#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skg/evaluation.hpp"
#include "skg/model.hpp"
#include "skg/rng.hpp"

namespace skg {

struct Dataset {
  std::vector<std::string> labels;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  bool shuffle = true;
  ThresholdPolicy threshold;
  // Write measured wall time into the RunLog CSV. Off by default so the CSV
  // depends only on seed, data and config.
  bool log_timing = false;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_macro_f = 0.0;
  double seconds = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;

  // epoch,train_loss,val_macro_f,seconds
  void write_csv(std::ostream& out, bool with_timing = false) const;
};

// Per-class target: multi-hot / |labels| for the softmax head, multi-hot for
// the sigmoid head.
Tensor label_target(const std::vector<std::size_t>& label_ids, std::size_t num_labels, HeadKind head);

// -sum_c t_c log(p_c + 1e-12) with t = multi-hot(labels) / |labels|.
// Throws DomainError for an empty label set.
double loss(const Tensor& probs, const std::vector<std::size_t>& label_ids);

Var example_loss(Var probs, const std::vector<std::size_t>& label_ids, std::size_t num_labels, HeadKind head);

std::vector<PreparedExample> prepare_all(const SymbolModel& model, std::span<const Example> examples,
                                         const std::vector<std::string>& labels);

// One pass of mini-batch SGD. Each batch runs as one disjoint graph; the
// summed loss gradient is divided by the batch cardinality. Returns the mean
// per-example loss.
double train_epoch(SymbolModel& model, std::span<const PreparedExample> data, const TrainConfig& config, Rng& rng);

MetricsReport evaluate(SymbolModel& model, std::span<const PreparedExample> data, const std::vector<std::string>& labels,
                       const ThresholdPolicy& policy = {});

struct TrainResult {
  RunLog log;
  ParamStore best_params;
  std::optional<std::size_t> best_epoch;
  double best_val_macro_f = 0.0;
};

// Runs config.epochs epochs with per-epoch validation. The model is left at
// the final epoch's parameters; the best-by-validation parameters are
// returned. With `out_dir`, best.ckpt and runlog.csv are written there.
TrainResult train(SymbolModel& model, const Dataset& data, const TrainConfig& config,
                  const std::optional<std::string>& out_dir = std::nullopt);

}  // namespace skg
