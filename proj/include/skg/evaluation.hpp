#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "skg/tensor.hpp"

namespace skg {

// How a probability vector becomes a label set.
struct ThresholdPolicy {
  enum class Kind { UniformPrior, TopK, Fixed };
  Kind kind = Kind::UniformPrior;
  std::size_t k = 1;
  double tau = 0.5;

  static ThresholdPolicy uniform_prior() { return {}; }
  static ThresholdPolicy top_k(std::size_t k) { return {Kind::TopK, k, 0.5}; }
  static ThresholdPolicy fixed(double tau) { return {Kind::Fixed, 1, tau}; }
  // "uniform_prior", "top<k>" or "fixed:<tau>"
  static ThresholdPolicy parse(const std::string& text);
  std::string describe() const;
};

// Label ids in ascending order. Uniform-prior keeps labels with p > 1/C;
// top-k keeps the k largest (ties to the lower id); fixed keeps p > tau.
std::vector<std::size_t> predict_labels(const Tensor& probs, const ThresholdPolicy& policy = {});

struct LabelScore {
  std::string label;
  std::size_t frequency = 0;  // examples whose truth contains the label
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double f_score = 0.0;  // x100
};

struct MetricsReport {
  double macro_f = 0.0;  // x100, unweighted mean of per-label F
  double micro_f = 0.0;  // x100, from counts pooled over labels
  std::string threshold;
  std::vector<LabelScore> labels;

  // label,frequency,f_score
  void write_per_label_csv(std::ostream& out) const;
  // metric,value rows: macro_f, micro_f, threshold
  void write_summary_csv(std::ostream& out) const;
  // label,tp,fp,fn
  void write_confusion_csv(std::ostream& out) const;
};

// 2 tp / (2 tp + fp + fn) x 100, or 0 when the denominator is 0.
double f_score(std::size_t tp, std::size_t fp, std::size_t fn);

// Predictions and truth are per-example label-id sets aligned by position.
// Throws ConfigError for an id outside `labels`, DimensionError on misaligned
// lists.
MetricsReport f_scores(const std::vector<std::vector<std::size_t>>& predictions,
                       const std::vector<std::vector<std::size_t>>& truth, const std::vector<std::string>& labels,
                       const std::string& threshold = ThresholdPolicy{}.describe());

// Same, with label names instead of ids.
MetricsReport f_scores_named(const std::vector<std::vector<std::string>>& predictions,
                             const std::vector<std::vector<std::string>>& truth, const std::vector<std::string>& labels,
                             const std::string& threshold = ThresholdPolicy{}.describe());

}  // namespace skg
