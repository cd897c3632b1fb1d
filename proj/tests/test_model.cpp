#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "skg/errors.hpp"
#include "skg/gradcheck.hpp"
#include "skg/model.hpp"

using namespace skg;

namespace {

const std::vector<std::string> kWords = {"car", "eggs", "road", "red", "sit", "in", "on", "near", "bottle",
                                         "glass", "self", "related", "to", "is", "a", "cold", "wheel"};

std::shared_ptr<const EmbeddingTable> random_table(std::size_t dim, Rng& rng) {
  auto t = std::make_shared<EmbeddingTable>(dim);
  for (const auto& w : kWords) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    t->insert(w, v);
  }
  return t;
}

const std::vector<std::string> kObjects = {"car", "eggs", "road", "bottle", "glass", "wheel", "red car", "zqx"};
const std::vector<std::string> kPreds = {"sit in", "on", "near", "related to", "is a"};

// Random scene graph with parallel edges and self-loops allowed.
LabeledGraph random_graph(std::size_t n, Rng& rng) {
  LabeledGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    GraphNode node{kObjects[rng.below(kObjects.size())], {}};
    if (rng.bernoulli(0.4)) node.attributes.push_back(rng.bernoulli(0.5) ? "red" : "cold");
    g.nodes.push_back(node);
  }
  if (n > 0) {
    const std::size_t m = rng.below(2 * n + 1);
    for (std::size_t e = 0; e < m; ++e) g.edges.push_back({rng.below(n), rng.below(n), kPreds[rng.below(kPreds.size())]});
  }
  return validate_graph(g);
}

ModelConfig small_config(std::size_t embed = 4, std::size_t hidden = 5) {
  ModelConfig c;
  c.embed_dim = embed;
  c.hidden_dim = hidden;
  c.gcn_layers = 2;
  c.num_labels = 3;
  c.seed = 7;
  return c;
}

Example random_example(Rng& rng, std::size_t n = 5) {
  Example ex;
  ex.image_id = "img";
  ex.scene = random_graph(n, rng);
  LabeledGraph kg = random_graph(n, rng);
  kg.kind = GraphKind::Knowledge;
  ex.knowledge = validate_graph(kg);
  ex.labels = {"a"};
  return ex;
}

const std::vector<std::string> kLabels = {"a", "b", "c"};

Tensor tensor_of(const std::vector<double>& v) { return Tensor({1, v.size()}, v); }

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("row selector recovers relu of the node feature") {
    Rng rng(61);
    const auto table = random_table(3, rng);
    LabeledGraph g;
    g.nodes = {{"car", {"red"}}};
    g = validate_graph(g);
    Tensor w({3, 6});
    for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
    Tape tape;
    const Tensor v = encode_nodes(encoder_input(tape, graph_inputs(g, *table), std::nullopt), tape.constant(w),
                                  Nonlinearity::Relu)
                         .value();
    const auto x = oracle::node_feature(g.nodes[0], *table);
    for (std::size_t k = 0; k < 3; ++k) CHECK(v(0, k) == oracle::relu(x[k]));
  }

  TEST_CASE("zero weights give zero states") {
    Rng rng(62);
    const auto table = random_table(3, rng);
    LabeledGraph g;
    g.nodes = {{"car", {}}, {"eggs", {}}};
    g.edges = {{1, 0, "sit in"}};
    g = validate_graph(g);
    Tape tape;
    const Tensor v = encode_nodes(encoder_input(tape, graph_inputs(g, *table), std::nullopt),
                                  tape.constant(Tensor({4, 6})), Nonlinearity::Relu)
                         .value();
    for (double x : v.values()) CHECK(x == 0.0);
  }

  TEST_CASE("layer 0 matches the dense loop") {
    Rng rng(63);
    const auto table = random_table(4, rng);
    for (int trial = 0; trial < 20; ++trial) {
      const LabeledGraph g = random_graph(4, rng);
      const Tensor w = oracle::random_matrix(5, 8, rng);
      Tape tape;
      const Tensor v =
          encode_nodes(encoder_input(tape, graph_inputs(g, *table), std::nullopt), tape.constant(w), Nonlinearity::Relu)
              .value();
      CHECK(oracle::max_abs(v, oracle::encode(g, *table, w)) <= 1e-12);
    }
  }
}

TEST_SUITE("gcn") {
  TEST_CASE("one edge with identity weights") {
    LabeledGraph g;
    g.nodes = {{"j", {}}, {"i", {}}};
    g.edges = {{0, 1, "on"}};
    g = validate_graph(g);
    Tape tape;
    Var prev = tape.constant(Tensor::matrix({{1, -1, 2}, {5, 5, 5}}));
    const Tensor v = gcn_layer(prev, in_neighbor_mean(g), tape.constant(Tensor::identity(3)), Nonlinearity::Relu).value();
    CHECK(v(1, 0) == 1.0);
    CHECK(v(1, 1) == 0.0);
    CHECK(v(1, 2) == 2.0);
    // j has no in-edge: self-loop.
    CHECK(v(0, 0) == 1.0);
    CHECK(v(0, 1) == 0.0);
  }

  TEST_CASE("opposite in-neighbors cancel") {
    LabeledGraph g;
    g.nodes = {{"a", {}}, {"b", {}}, {"i", {}}};
    g.edges = {{0, 2, "on"}, {1, 2, "on"}};
    g = validate_graph(g);
    Tape tape;
    Var prev = tape.constant(Tensor::matrix({{1, -2, 3}, {-1, 2, -3}, {9, 9, 9}}));
    const Tensor v = gcn_layer(prev, in_neighbor_mean(g), tape.constant(Tensor::identity(3)), Nonlinearity::Relu).value();
    for (std::size_t k = 0; k < 3; ++k) CHECK(v(2, k) == 0.0);
  }

  TEST_CASE("random graphs match the dense adjacency") {
    Rng rng(64);
    for (int trial = 0; trial < 100; ++trial) {
      const LabeledGraph g = random_graph(1 + rng.below(8), rng);
      const Tensor prev = oracle::random_matrix(g.nodes.size(), 6, rng);
      const Tensor w = oracle::random_matrix(6, 6, rng);
      Tape tape;
      const Tensor v = gcn_layer(tape.constant(prev), in_neighbor_mean(g), tape.constant(w), Nonlinearity::Relu).value();
      CHECK(oracle::max_abs(v, oracle::gcn(g, prev, w)) <= 1e-12);
    }
  }

  TEST_CASE("state rows must match the graph") {
    LabeledGraph g;
    g.nodes = {{"a", {}}};
    Tape tape;
    CHECK_THROWS_AS(gcn_layer(tape.constant(Tensor({2, 3})), in_neighbor_mean(validate_graph(g)),
                              tape.constant(Tensor::identity(3)), Nonlinearity::Relu),
                    DimensionError);
  }
}

TEST_SUITE("readout and fusion") {
  TEST_CASE("readout of one node is that node") {
    Tape tape;
    CHECK(readout_sum(tape.constant(Tensor::matrix({{1, -2, 3}}))).value() == Tensor::matrix({{1, -2, 3}}));
  }

  TEST_CASE("readout of the empty graph is zero") {
    Tape tape;
    const Tensor r = readout_sum(tape.constant(Tensor({0, 4}))).value();
    CHECK(r.size() == 4);
    for (double x : r.values()) CHECK(x == 0.0);
  }

  TEST_CASE("readout ignores node order") {
    Rng rng(65);
    const Tensor s = oracle::random_matrix(7, 5, rng);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Tensor p({7, 5});
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t k = 0; k < 5; ++k) p(i, k) = s(perm[i], k);
    Tape tape;
    const Tensor a = readout_sum(tape.constant(s)).value();
    CHECK(oracle::max_abs(a, readout_sum(tape.constant(p)).value()) < 1e-9);
  }

  TEST_CASE("concat fusion examples") {
    CHECK(fuse_concat(tensor_of({1, 2}), tensor_of({3, 4})) == Tensor::vector({1, 2, 3, 4, 3, 8}));
    CHECK(fuse_concat(tensor_of({0, 0}), tensor_of({3, 4})) == Tensor::vector({0, 0, 3, 4, 0, 0}));
    CHECK(ModelConfig{}.fusion_width() == 1536);
    Tape tape;
    CHECK_THROWS_AS(fuse_concat(tape.constant(tensor_of({1, 2})), tape.constant(tensor_of({1, 2, 3}))), DimensionError);
  }

  TEST_CASE("attention with equal norms is the midpoint") {
    const auto [fused, alpha] = attention_fuse(tensor_of({3, 4}), tensor_of({0, 5}));
    CHECK(alpha[0] == 0.5);
    CHECK(alpha[1] == 0.5);
    CHECK(fused == Tensor::vector({1.5, 4.5}));
  }

  TEST_CASE("attention analytic case") {
    const auto [fused, alpha] = attention_fuse(tensor_of({1, 0}), tensor_of({0, std::sqrt(1 + std::log(2.0))}));
    CHECK(std::abs(alpha[0] - 1.0 / 3.0) <= 1e-12);
    CHECK(std::abs(alpha[1] - 2.0 / 3.0) <= 1e-12);
    CHECK(std::abs(alpha[0] + alpha[1] - 1.0) <= 1e-12);
    CHECK(std::abs(fused[0] - 1.0 / 3.0) <= 1e-12);
  }

  TEST_CASE("attention weights form a simplex and depend only on the norms") {
    Rng rng(66);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t d = 1 + rng.below(8);
      const Tensor a = oracle::random_matrix(1, d, rng), b = oracle::random_matrix(1, d, rng);
      const auto [fused, alpha] = attention_fuse(a, b);
      CHECK(alpha[0] > 0.0);
      CHECK(alpha[0] < 1.0);
      CHECK(alpha[1] > 0.0);
      CHECK(alpha[1] < 1.0);
      CHECK(std::abs(alpha[0] + alpha[1] - 1.0) <= 1e-12);
      // Reversal and sign flips keep both norms.
      Tensor ra({1, d}), rb({1, d});
      for (std::size_t k = 0; k < d; ++k) {
        ra[k] = -a[d - 1 - k];
        rb[k] = b[d - 1 - k];
      }
      const auto moved = attention_fuse(ra, rb).second;
      CHECK(std::abs(moved[0] - alpha[0]) <= 1e-12);

      // The row-wise form used for batches agrees.
      Tape tape;
      const auto rows = attention_fuse_rows(tape.constant(a), tape.constant(b));
      CHECK(oracle::max_abs(rows.weights.value(), alpha) <= 1e-12);
      CHECK(oracle::max_abs(rows.fused.value(), fused) <= 1e-12);
    }
  }

  TEST_CASE("attention length mismatch") {
    Tape tape;
    CHECK_THROWS_AS(attention_fuse(tape.constant(tensor_of({1})), tape.constant(tensor_of({1, 2}))), DimensionError);
  }
}

TEST_SUITE("classifier") {
  TEST_CASE("zero weights give the uniform distribution") {
    Tape tape;
    std::vector<MlpLayer> layers{{tape.constant(Tensor({3, 6})), tape.constant(Tensor({1, 3}))},
                                 {tape.constant(Tensor({4, 3})), tape.constant(Tensor({1, 4}))}};
    const Tensor p = classify(tape.constant(tensor_of({1, 2, 3, 4, 5, 6})), layers, Nonlinearity::Relu).value();
    for (double x : p.values()) CHECK(x == 0.25);
  }

  TEST_CASE("hand-sized network") {
    Tape tape;
    std::vector<MlpLayer> layers{
        {tape.constant(Tensor::matrix({{1, 0}, {0, 1}})), tape.constant(tensor_of({0, -1}))},
        {tape.constant(Tensor::matrix({{1, 1}, {0, 1}})), tape.constant(tensor_of({0, 1}))}};
    // hidden = relu([2, 0]) = [2, 0]; logits = [2, 1].
    const Tensor p = classify(tape.constant(tensor_of({2, 1})), layers, Nonlinearity::Relu).value();
    const double e = std::exp(1.0);
    CHECK(std::abs(p[0] - e / (e + 1)) <= 1e-12);
    CHECK(std::abs(p[1] - 1 / (e + 1)) <= 1e-12);
    CHECK(std::abs(p[0] + p[1] - 1.0) <= 1e-12);
    CHECK_THROWS_AS(classify(tape.constant(tensor_of({2, 1, 0})), layers, Nonlinearity::Relu), DimensionError);
  }
}

TEST_SUITE("model") {
  TEST_CASE("parameter accounting") {
    ModelConfig c;
    c.embed_dim = 2;
    c.hidden_dim = 3;
    c.gcn_layers = 1;
    c.num_labels = 2;
    c.mlp_hidden = std::vector<std::size_t>{3};
    CHECK(param_count(c) == 80);
    Rng rng(67);
    SymbolModel model(c, random_table(2, rng));
    CHECK(model.params().scalar_count() == 80);

    ModelConfig att = c;
    att.fusion = FusionMode::Attention;
    CHECK(param_count(c) - param_count(att) == 18);

    ModelConfig wide = c;
    wide.num_labels = 4;
    CHECK(param_count(wide) - param_count(c) == (3 + 1) * 2);

    ModelConfig sg = c;
    sg.graphs = GraphMode::SceneOnly;
    CHECK(param_count(c) > param_count(sg));

    // One all-ones SGD step moves exactly the counted scalars.
    ParamStore& params = model.params();
    std::vector<Tensor> before;
    for (std::size_t i = 0; i < params.size(); ++i) {
      before.push_back(params[i].value);
      params[i].grad.fill(1.0);
    }
    sgd_step(params, 0.5);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < before[i].size(); ++k) changed += params[i].value[k] != before[i][k];
    CHECK(changed == 80);
  }

  TEST_CASE("both graphs empty leaves only the bias path") {
    Rng rng(68);
    ModelConfig c = small_config();
    SymbolModel model(c, random_table(4, rng));
    for (const char* b : {"mlp.0.bias", "mlp.out.bias"})
      for (double& x : model.params().at(b).value.values()) x = rng.uniform(-1, 1);
    Example ex;
    ex.labels = {"a"};
    const PreparedExample p = model.prepare(ex, kLabels);
    Tape tape;
    const auto r = model.forward(tape, p);
    for (double x : r.diagnostics.readout_kg.values()) CHECK(x == 0.0);
    for (double x : r.diagnostics.readout_sg.values()) CHECK(x == 0.0);
    const Tensor& b1 = model.params().at("mlp.0.bias").value;
    const Tensor& w2 = model.params().at("mlp.out.weight").value;
    const Tensor& b2 = model.params().at("mlp.out.bias").value;
    Tensor h = b1;
    for (double& x : h.values()) x = oracle::relu(x);
    Tensor logits = oracle::matmul(h, oracle::transpose(w2));
    double z = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) z += std::exp(logits[k] += b2[k]);
    for (std::size_t k = 0; k < logits.size(); ++k) CHECK(std::abs(r.probs.value()[k] - std::exp(logits[k]) / z) <= 1e-12);
  }

  TEST_CASE("one extra layer is one more sigma(W .) on a single node") {
    Rng rng(69);
    const auto table = random_table(4, rng);
    ModelConfig c1 = small_config();
    c1.gcn_layers = 1;
    ModelConfig c2 = c1;
    c2.gcn_layers = 2;
    SymbolModel m1(c1, table), m2(c2, table);
    for (const char* n : {"sg.enc", "sg.gcn1"}) m2.params().at(n).value = m1.params().at(n).value;
    Example ex;
    ex.scene.nodes = {{"car", {"red"}}};
    ex.scene = validate_graph(ex.scene);
    ex.labels = {"a"};
    Tape t1, t2;
    const Tensor r1 = m1.forward(t1, m1.prepare(ex, kLabels)).diagnostics.readout_sg;
    const Tensor r2 = m2.forward(t2, m2.prepare(ex, kLabels)).diagnostics.readout_sg;
    Tensor want = oracle::matmul(r1, oracle::transpose(m2.params().at("sg.gcn2").value));
    for (double& x : want.values()) x = oracle::relu(x);
    CHECK(oracle::max_abs(r2, want) <= 1e-12);
  }

  TEST_CASE("shared towers on identical graphs fuse to the readout") {
    Rng rng(70);
    ModelConfig c = small_config();
    c.share_towers = true;
    c.fusion = FusionMode::Attention;
    SymbolModel model(c, random_table(4, rng));
    Example ex = random_example(rng);
    ex.knowledge = ex.scene;
    Tape tape;
    const auto d = model.forward(tape, model.prepare(ex, kLabels)).diagnostics;
    CHECK(d.readout_kg == d.readout_sg);
    REQUIRE(d.alpha);
    CHECK(d.alpha->first == 0.5);
    CHECK(d.alpha->second == 0.5);
    CHECK(oracle::max_abs(attention_fuse(d.readout_kg, d.readout_sg).first, d.readout_sg) == 0.0);
  }

  TEST_CASE("relabeling nodes leaves probabilities unchanged") {
    Rng rng(71);
    for (FusionMode f : {FusionMode::Concat, FusionMode::Attention}) {
      ModelConfig c = small_config();
      c.fusion = f;
      SymbolModel model(c, random_table(4, rng));
      for (int trial = 0; trial < 20; ++trial) {
        const Example ex = random_example(rng, 1 + rng.below(8));
        auto permute = [&](const LabeledGraph& g) {
          std::vector<std::size_t> perm(g.nodes.size());
          std::iota(perm.begin(), perm.end(), 0);
          rng.shuffle(perm);
          LabeledGraph out;
          out.kind = g.kind;
          out.nodes.resize(g.nodes.size());
          for (std::size_t i = 0; i < perm.size(); ++i) out.nodes[perm[i]] = g.nodes[i];
          for (const auto& e : g.edges) out.edges.push_back({perm[e.src], perm[e.dst], e.relation});
          rng.shuffle(out.edges);
          return out;
        };
        Example moved = ex;
        moved.scene = permute(ex.scene);
        moved.knowledge = permute(ex.knowledge);
        const Tensor a = model.predict(model.prepare(ex, kLabels));
        const Tensor b = model.predict(model.prepare(moved, kLabels));
        CHECK(oracle::max_abs(a, b) < 1e-9);
      }
    }
  }

  TEST_CASE("a relation token acts only through layer 0") {
    Rng rng(72);
    const auto table = random_table(4, rng);
    ModelConfig c = small_config();
    c.gcn_layers = 3;
    SymbolModel model(c, table);
    Example ex = random_example(rng, 6);
    ex.scene.edges.push_back({0, 1, "on"});
    ex.scene = validate_graph(ex.scene);
    Example changed = ex;
    for (auto& e : changed.scene.edges)
      if (e.relation == "on") e.relation = "related to";
    changed.scene = validate_graph(changed.scene);
    const auto a = in_neighbor_mean(changed.scene), b = in_neighbor_mean(ex.scene);
    CHECK(a->offsets == b->offsets);
    CHECK(a->indices == b->indices);
    CHECK(a->weights == b->weights);

    // Patched run: layer-0 states of the changed graph, propagated on the
    // original graph's adjacency.
    Tape tape;
    const GraphInputs orig = graph_inputs(ex.scene, *table);
    const GraphInputs patched = graph_inputs(changed.scene, *table);
    Var v = encode_nodes(encoder_input(tape, patched, std::nullopt), tape.param(model.params().at("sg.enc")),
                         Nonlinearity::Relu);
    for (const char* w : {"sg.gcn1", "sg.gcn2", "sg.gcn3"})
      v = gcn_layer(v, orig.adjacency, tape.param(model.params().at(w)), Nonlinearity::Relu);
    const Tensor want = readout_sum(v).value();

    Tape t2;
    const Tensor got = model.forward(t2, model.prepare(changed, kLabels)).diagnostics.readout_sg;
    CHECK(oracle::max_abs(got, want) <= 1e-12);
  }

  TEST_CASE("one-example graphs never error") {
    Rng rng(73);
    SymbolModel model(small_config(), random_table(4, rng));
    Example ex = random_example(rng);
    ex.scene = LabeledGraph{};
    const Tensor p = model.predict(model.prepare(ex, kLabels));
    CHECK(p.all_finite());
    CHECK(std::abs(std::accumulate(p.values().begin(), p.values().end(), 0.0) - 1.0) <= 1e-12);
  }

  TEST_CASE("batched forward equals single forwards") {
    Rng rng(74);
    for (FusionMode f : {FusionMode::Concat, FusionMode::Attention, FusionMode::AttentionLearned}) {
      ModelConfig c = small_config();
      c.fusion = f;
      SymbolModel model(c, random_table(4, rng));
      std::vector<PreparedExample> prepared;
      for (int i = 0; i < 6; ++i) prepared.push_back(model.prepare(random_example(rng, i), kLabels));
      std::vector<const PreparedExample*> batch;
      for (const auto& p : prepared) batch.push_back(&p);
      const Tensor all = model.predict_batch(batch);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Tensor one = model.predict(*batch[b]);
        for (std::size_t k = 0; k < one.size(); ++k) CHECK(std::abs(all(b, k) - one[k]) <= 1e-12);
      }
    }
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(75);
    const auto table = random_table(4, rng);
    ModelConfig c = small_config();
    c.fusion = FusionMode::AttentionLearned;
    SymbolModel model(c, table);
    const auto path = (std::filesystem::temp_directory_path() / "skg_test_roundtrip.ckpt").string();
    save_checkpoint(path, c, kLabels, model.params());
    const Checkpoint ckpt = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(ckpt.labels == kLabels);
    CHECK(config_to_json(ckpt.config) == config_to_json(c));
    ModelConfig other = c;
    other.seed = 99;
    SymbolModel fresh(other, table);
    restore_params(fresh.params(), ckpt);
    for (std::size_t i = 0; i < model.params().size(); ++i) CHECK(fresh.params()[i].value == model.params()[i].value);
    const Example ex = random_example(rng);
    CHECK(fresh.predict(fresh.prepare(ex, kLabels)) == model.predict(model.prepare(ex, kLabels)));
  }

  TEST_CASE("invalid configs are rejected") {
    Rng rng(76);
    ModelConfig c = small_config();
    c.gcn_layers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = small_config();
    c.num_labels = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(SymbolModel(small_config(3), random_table(4, rng)), ConfigError);
  }

  TEST_CASE("full-model gradient check") {
    for (FusionMode f : {FusionMode::Concat, FusionMode::Attention, FusionMode::AttentionLearned})
      for (std::size_t k : {1, 3}) {
        GradCheckOptions o;
        o.fusion = f;
        o.gcn_layers = k;
        const GradCheckReport r = gradient_check(o);
        CAPTURE(r.fusion);
        CHECK(r.passed());
        CHECK(r.max_rel_error() < 1e-4);
      }
    GradCheckOptions sig;
    sig.nonlinearity = Nonlinearity::Sigmoid;
    sig.head = HeadKind::Sigmoid;
    sig.trainable_embeddings = true;
    CHECK(gradient_check(sig).passed());
  }

  TEST_CASE("a corrupted backward rule is caught on the right groups") {
    GradCheckOptions o;
    o.fault = Op::Sparse;
    const GradCheckReport r = gradient_check(o);
    CHECK_FALSE(r.passed());
    for (const auto& g : r.groups) {
      CAPTURE(g.name);
      const bool tower = g.name.rfind("sg.", 0) == 0 || g.name.rfind("kg.", 0) == 0;
      CHECK(g.passed != tower);
    }
  }
}
