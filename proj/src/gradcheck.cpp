#include "skg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <ostream>

#include "skg/rng.hpp"
#include "skg/training.hpp"

namespace skg {

bool GradCheckReport::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupResult& g) { return g.passed; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

namespace {

constexpr std::size_t kWords = 10;
const char* const kRelations[] = {"on", "near", "sit in", "RelatedTo", "IsA", "HasA"};

LabeledGraph random_graph(std::size_t n, GraphKind kind, Rng& rng) {
  LabeledGraph g;
  g.kind = kind;
  for (std::size_t i = 0; i < n; ++i) {
    GraphNode node{"w" + std::to_string(rng.below(kWords)), {}};
    if (rng.bernoulli(0.4)) node.attributes.push_back("w" + std::to_string(rng.below(kWords)));
    g.nodes.push_back(std::move(node));
  }
  const std::size_t edges = n + rng.below(n + 1);
  for (std::size_t k = 0; k < edges && n > 0; ++k)
    g.edges.push_back({rng.below(n), rng.below(n), kRelations[rng.below(std::size(kRelations))]});
  return validate_graph(std::move(g));
}

double loss_value(SymbolModel& model, const PreparedExample& ex) {
  Tape tape;
  Var probs = model.forward(tape, ex).probs;
  return example_loss(probs, ex.label_ids, model.config().num_labels, model.config().head).value().item();
}

}  // namespace

GradCheckReport gradient_check(const GradCheckOptions& o) {
  Rng rng(o.seed, "gradcheck");
  auto table = std::make_shared<EmbeddingTable>(o.embed_dim);
  std::vector<double> vec(o.embed_dim);
  auto add_word = [&](const std::string& w) {
    for (double& v : vec) v = rng.uniform(-1.0, 1.0);
    table->insert(w, vec);
  };
  for (std::size_t i = 0; i < kWords; ++i) add_word("w" + std::to_string(i));
  for (const char* w : {"on", "near", "sit", "in", "related", "to", "is", "a", "has", "self"}) add_word(w);

  ModelConfig config;
  config.embed_dim = o.embed_dim;
  config.hidden_dim = o.hidden_dim;
  config.gcn_layers = o.gcn_layers;
  config.num_labels = o.num_labels;
  config.fusion = o.fusion;
  config.nonlinearity = o.nonlinearity;
  config.head = o.head;
  config.trainable_embeddings = o.trainable_embeddings;
  config.seed = o.seed;
  SymbolModel model(config, table);
  // Nonzero biases so no unit sits exactly on a ReLU kink.
  ParamStore& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name.ends_with(".bias"))
      for (double& v : params[i].value.values()) v = rng.uniform(-0.5, 0.5);

  Example ex;
  ex.image_id = "gradcheck";
  ex.scene = random_graph(o.nodes, GraphKind::Scene, rng);
  ex.knowledge = random_graph(o.nodes, GraphKind::Knowledge, rng);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < o.num_labels; ++c) labels.push_back("label" + std::to_string(c));
  ex.labels.push_back(labels[rng.below(o.num_labels)]);
  if (rng.bernoulli(0.5)) ex.labels.push_back(labels[rng.below(o.num_labels)]);
  const PreparedExample prepared = model.prepare(ex, labels);

  params.zero_grad();
  {
    Tape tape;
    if (o.fault) tape.inject_fault(*o.fault, o.fault_scale);
    Var probs = model.forward(tape, prepared).probs;
    tape.backward(example_loss(probs, prepared.label_ids, o.num_labels, o.head));
  }

  GradCheckReport report;
  report.fusion = to_string(o.fusion);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    GroupResult group{p.name, p.value.size(), 0.0, true};
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + o.eps;
      const double up = loss_value(model, prepared);
      p.value[k] = saved - o.eps;
      const double down = loss_value(model, prepared);
      p.value[k] = saved;
      const double numeric = (up - down) / (2.0 * o.eps);
      const double analytic = p.grad[k];
      const double scale = std::max({std::abs(analytic), std::abs(numeric), o.floor});
      group.max_rel_error = std::max(group.max_rel_error, std::abs(analytic - numeric) / scale);
    }
    group.passed = group.max_rel_error < o.tolerance;
    report.groups.push_back(std::move(group));
  }
  params.zero_grad();
  return report;
}

void write_gradcheck_report(std::ostream& out, const std::vector<GradCheckReport>& reports) {
  out << "fusion,group,scalars,max_rel_error,status\n";
  char buf[64];
  for (const auto& r : reports)
    for (const auto& g : r.groups) {
      std::snprintf(buf, sizeof buf, "%.3e", g.max_rel_error);
      out << r.fusion << ',' << g.name << ',' << g.scalars << ',' << buf << ',' << (g.passed ? "pass" : "FAIL") << '\n';
    }
}

}  // namespace skg
