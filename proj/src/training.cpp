#include "skg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>

#include "skg/errors.hpp"

namespace skg {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite non-negative number");
}

void RunLog::write_csv(std::ostream& out, bool with_timing) const {
  out << "epoch,train_loss,val_macro_f,seconds\n";
  char buf[128];
  for (const auto& r : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.10f,%.4f,%.3f\n", r.epoch, r.train_loss, r.val_macro_f,
                  with_timing ? r.seconds : 0.0);
    out << buf;
  }
}

Tensor label_target(const std::vector<std::size_t>& label_ids, std::size_t num_labels, HeadKind head) {
  if (label_ids.empty()) throw DomainError("loss needs a non-empty label set");
  Tensor t({1, num_labels});
  const double mass = head == HeadKind::Softmax ? 1.0 / static_cast<double>(label_ids.size()) : 1.0;
  for (std::size_t id : label_ids) {
    if (id >= num_labels) throw DimensionError("label id " + std::to_string(id) + " >= " + std::to_string(num_labels));
    t[id] = mass;
  }
  return t;
}

double loss(const Tensor& probs, const std::vector<std::size_t>& label_ids) {
  const Tensor t = label_target(label_ids, probs.size(), HeadKind::Softmax);
  double l = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) l -= t[i] * guarded_log(probs[i]);
  return l;
}

Var example_loss(Var probs, const std::vector<std::size_t>& label_ids, std::size_t num_labels, HeadKind head) {
  const Tensor t = label_target(label_ids, num_labels, head);
  return head == HeadKind::Softmax ? cross_entropy(probs, t) : binary_cross_entropy(probs, t);
}

std::vector<PreparedExample> prepare_all(const SymbolModel& model, std::span<const Example> examples,
                                         const std::vector<std::string>& labels) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(model.prepare(e, labels));
  return out;
}

namespace {

double row_loss(std::span<const double> p, std::span<const double> t, HeadKind head) {
  double l = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    l -= t[i] * guarded_log(p[i]);
    if (head == HeadKind::Sigmoid) l -= (1.0 - t[i]) * guarded_log(1.0 - p[i]);
  }
  return l;
}

constexpr std::size_t kEvalBatch = 64;

}  // namespace

double train_epoch(SymbolModel& model, std::span<const PreparedExample> data, const TrainConfig& config, Rng& rng) {
  config.validate();
  if (data.empty()) throw ConfigError("training split is empty");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.shuffle) rng.shuffle(order);

  const std::size_t c = model.config().num_labels;
  const HeadKind head = model.config().head;
  ParamStore& params = model.params();
  params.zero_grad();
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    std::vector<const PreparedExample*> batch;
    Tensor target({end - start, c});
    for (std::size_t k = start; k < end; ++k) {
      const PreparedExample& ex = data[order[k]];
      batch.push_back(&ex);
      const Tensor t = label_target(ex.label_ids, c, head);
      std::copy(t.values().begin(), t.values().end(), target.row(k - start).begin());
    }
    Tape tape;
    Var probs = model.forward_batch(tape, batch).probs;
    Var l = head == HeadKind::Softmax ? cross_entropy(probs, target) : binary_cross_entropy(probs, target);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const double value = row_loss(probs.value().row(r), target.row(r), head);
      if (!std::isfinite(value)) throw TrainingError("non-finite loss on example '" + batch[r]->image_id + "'");
      total += value;
    }
    tape.backward(l);
    const double inv = 1.0 / static_cast<double>(end - start);
    for (std::size_t i = 0; i < params.size(); ++i)
      for (double& g : params[i].grad.values()) g *= inv;
    sgd_step(params, config.lr);
  }
  return total / static_cast<double>(data.size());
}

MetricsReport evaluate(SymbolModel& model, std::span<const PreparedExample> data, const std::vector<std::string>& labels,
                       const ThresholdPolicy& policy) {
  std::vector<std::vector<std::size_t>> predictions, truth;
  predictions.reserve(data.size());
  truth.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalBatch) {
    std::vector<const PreparedExample*> batch;
    for (std::size_t k = start; k < std::min(data.size(), start + kEvalBatch); ++k) batch.push_back(&data[k]);
    const Tensor probs = model.predict_batch(batch);
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto row = probs.row(r);
      predictions.push_back(predict_labels(Tensor({row.size()}, {row.begin(), row.end()}), policy));
      truth.push_back(batch[r]->label_ids);
    }
  }
  return f_scores(predictions, truth, labels, policy.describe());
}

TrainResult train(SymbolModel& model, const Dataset& data, const TrainConfig& config,
                  const std::optional<std::string>& out_dir) {
  config.validate();
  if (data.train.empty()) throw ConfigError("training split is empty");
  if (data.val.empty()) throw ConfigError("validation split is empty");
  if (data.labels.size() != model.config().num_labels)
    throw ConfigError("dataset has " + std::to_string(data.labels.size()) + " labels, model expects " +
                      std::to_string(model.config().num_labels));

  const auto train_set = prepare_all(model, data.train, data.labels);
  const auto val_set = prepare_all(model, data.val, data.labels);
  for (const auto& ex : train_set)
    if (ex.label_ids.empty()) throw ConfigError("training example '" + ex.image_id + "' has no labels");

  TrainResult result;
  result.best_params = model.params().clone();
  Rng rng(config.seed, "shuffle");
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_epoch(model, train_set, config, rng);
    rec.val_macro_f = evaluate(model, val_set, data.labels, config.threshold).macro_f;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.epochs.push_back(rec);
    if (!result.best_epoch || rec.val_macro_f > result.best_val_macro_f) {
      result.best_epoch = epoch;
      result.best_val_macro_f = rec.val_macro_f;
      result.best_params = model.params().clone();
    }
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_checkpoint(*out_dir + "/best.ckpt", model.config(), data.labels, result.best_params);
    std::ofstream log(*out_dir + "/runlog.csv");
    result.log.write_csv(log, config.log_timing);
  }
  return result;
}

}  // namespace skg
