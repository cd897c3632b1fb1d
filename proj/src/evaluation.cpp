#include "skg/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "skg/errors.hpp"

namespace skg {

ThresholdPolicy ThresholdPolicy::parse(const std::string& text) {
  if (text == "uniform_prior") return uniform_prior();
  try {
    if (text.rfind("top", 0) == 0) {
      const long k = std::stol(text.substr(3));
      if (k < 1) throw ConfigError("top-k needs k >= 1");
      return top_k(static_cast<std::size_t>(k));
    }
    if (text.rfind("fixed:", 0) == 0) return fixed(std::stod(text.substr(6)));
  } catch (const std::logic_error&) {
  }
  throw ConfigError("unknown threshold policy '" + text + "' (uniform_prior | top<k> | fixed:<tau>)");
}

std::string ThresholdPolicy::describe() const {
  switch (kind) {
    case Kind::UniformPrior: return "uniform_prior";
    case Kind::TopK: return "top" + std::to_string(k);
    case Kind::Fixed: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "fixed:%.17g", tau);
      return buf;
    }
  }
  return "?";
}

std::vector<std::size_t> predict_labels(const Tensor& probs, const ThresholdPolicy& policy) {
  const std::size_t c = probs.size();
  std::vector<std::size_t> out;
  switch (policy.kind) {
    case ThresholdPolicy::Kind::UniformPrior: {
      const double prior = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < c; ++i)
        if (probs[i] > prior) out.push_back(i);
      break;
    }
    case ThresholdPolicy::Kind::Fixed:
      for (std::size_t i = 0; i < c; ++i)
        if (probs[i] > policy.tau) out.push_back(i);
      break;
    case ThresholdPolicy::Kind::TopK: {
      std::vector<std::size_t> order(c);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
      order.resize(std::min(policy.k, c));
      out = std::move(order);
      std::sort(out.begin(), out.end());
      break;
    }
  }
  return out;
}

double f_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 100.0 * static_cast<double>(2 * tp) / static_cast<double>(denom);
}

MetricsReport f_scores(const std::vector<std::vector<std::size_t>>& predictions,
                       const std::vector<std::vector<std::size_t>>& truth, const std::vector<std::string>& labels,
                       const std::string& threshold) {
  if (predictions.size() != truth.size())
    throw DimensionError("f_scores: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(truth.size()) + " examples");
  const std::size_t c = labels.size();
  MetricsReport report;
  report.threshold = threshold;
  report.labels.resize(c);
  for (std::size_t l = 0; l < c; ++l) report.labels[l].label = labels[l];

  auto as_mask = [&](const std::vector<std::size_t>& ids) {
    std::vector<char> mask(c, 0);
    for (std::size_t id : ids) {
      if (id >= c) throw ConfigError("label id " + std::to_string(id) + " outside the " + std::to_string(c) + " configured labels");
      mask[id] = 1;
    }
    return mask;
  };
  for (std::size_t e = 0; e < truth.size(); ++e) {
    const auto pred = as_mask(predictions[e]);
    const auto gold = as_mask(truth[e]);
    for (std::size_t l = 0; l < c; ++l) {
      auto& row = report.labels[l];
      row.frequency += gold[l];
      if (pred[l] && gold[l]) ++row.tp;
      else if (pred[l]) ++row.fp;
      else if (gold[l]) ++row.fn;
    }
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  double total = 0.0;
  for (auto& row : report.labels) {
    row.f_score = f_score(row.tp, row.fp, row.fn);
    total += row.f_score;
    tp += row.tp;
    fp += row.fp;
    fn += row.fn;
  }
  report.macro_f = c ? total / static_cast<double>(c) : 0.0;
  report.micro_f = f_score(tp, fp, fn);
  return report;
}

MetricsReport f_scores_named(const std::vector<std::vector<std::string>>& predictions,
                             const std::vector<std::vector<std::string>>& truth, const std::vector<std::string>& labels,
                             const std::string& threshold) {
  auto to_ids = [&](const std::vector<std::vector<std::string>>& sets) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& set : sets) {
      auto& ids = out.emplace_back();
      for (const auto& name : set) {
        auto it = std::find(labels.begin(), labels.end(), name);
        if (it == labels.end()) throw ConfigError("label '" + name + "' is not in the configured label list");
        ids.push_back(static_cast<std::size_t>(it - labels.begin()));
      }
    }
    return out;
  };
  return f_scores(to_ids(predictions), to_ids(truth), labels, threshold);
}

namespace {
std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}
}  // namespace

void MetricsReport::write_per_label_csv(std::ostream& out) const {
  out << "label,frequency,f_score\n";
  for (const auto& row : labels) out << row.label << ',' << row.frequency << ',' << fixed2(row.f_score) << '\n';
}

void MetricsReport::write_summary_csv(std::ostream& out) const {
  out << "metric,value\n";
  out << "macro_f," << fixed2(macro_f) << '\n';
  out << "micro_f," << fixed2(micro_f) << '\n';
  out << "threshold," << threshold << '\n';
}

void MetricsReport::write_confusion_csv(std::ostream& out) const {
  out << "label,tp,fp,fn\n";
  for (const auto& row : labels) out << row.label << ',' << row.tp << ',' << row.fp << ',' << row.fn << '\n';
}

}  // namespace skg
