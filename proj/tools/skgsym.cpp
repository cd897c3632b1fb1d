// skgsym: dataset preparation, training, evaluation, ablations, synthetic data
// and gradient checks from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// Every subcommand accepts --config FILE with key=value lines naming long
// options; flags given on the command line win over file values.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "skg/ablation.hpp"
#include "skg/bundle.hpp"
#include "skg/errors.hpp"
#include "skg/gradcheck.hpp"
#include "skg/kernels.hpp"
#include "skg/manifest.hpp"
#include "skg/synth.hpp"
#include "skg/training.hpp"

namespace fs = std::filesystem;
using namespace skg;
using nlohmann::json;

namespace {

// Thrown for problems the user fixes by changing the invocation.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// key=value lines, '#' comments. Values only fill options absent from argv.
void merge_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt || key == "config" || key == "help")
      throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "' for " + sub.get_name());
    if (opt->count() > 0) continue;
    if (opt->get_expected_max() > 1) {
      std::stringstream parts(value);
      for (std::string part; std::getline(parts, part, ',');) opt->add_result(trim(part));
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

// Resolved value of every option of a subcommand.
json resolved_config(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->get_expected_max() == 0) {
      out[name] = opt->count() > 0;
    } else if (opt->count() == 0 && opt->get_expected_max() > 1) {
      // CLI11 renders list defaults as "[a,b]", or "{}" when empty.
      std::string text = opt->get_default_str();
      json items = json::array();
      if (text.size() >= 2 && (text.front() == '[' || text.front() == '{')) text = text.substr(1, text.size() - 2);
      for (std::size_t start = 0; start < text.size();) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        items.push_back(text.substr(start, comma - start));
        start = comma + 1;
      }
      out[name] = items;
    } else if (opt->count() == 0) {
      out[name] = opt->get_default_str();
    } else if (opt->get_expected_max() > 1) {
      out[name] = opt->results();
    } else {
      out[name] = opt->results().back();
    }
  }
  return out;
}

template <typename T>
void check_positive(const char* name, T v) {
  if (!(v > 0)) throw UsageError(std::string("--") + name + " must be positive");
}

// ---------------------------------------------------------------- option groups

struct ModelFlags {
  std::size_t hidden = 512;
  std::size_t layers = 3;
  std::string fusion = "concat";
  std::string nonlinearity = "relu";
  bool share_towers = false;
  std::vector<std::size_t> mlp_hidden;
  std::string graphs = "both";
  std::string head = "softmax";
  bool trainable_embeddings = false;

  // ablate gives --layers and --graphs their own meaning.
  void add(CLI::App& sub, bool ablate = false) {
    sub.add_option("--hidden", hidden, "GCN and tower width");
    if (!ablate) sub.add_option("--layers", layers, "GCN layers per tower (K)");
    sub.add_option("--fusion", fusion, "concat | attention | attention_learned");
    sub.add_option("--nonlinearity", nonlinearity, "relu | sigmoid");
    sub.add_flag("--share-towers", share_towers, "one tower for both graphs");
    sub.add_option("--mlp-hidden", mlp_hidden, "classifier hidden widths, comma separated")->delimiter(',');
    if (!ablate) sub.add_option("--graphs", graphs, "both | sg_only | kg_only");
    sub.add_option("--head", head, "softmax | sigmoid");
    sub.add_flag("--trainable-embeddings", trainable_embeddings);
  }

  ModelConfig config(std::size_t embed_dim, std::size_t num_labels, std::uint64_t seed) const {
    ModelConfig c;
    c.embed_dim = embed_dim;
    c.hidden_dim = hidden;
    c.gcn_layers = layers;
    c.num_labels = num_labels;
    c.fusion = parse_fusion_mode(fusion);
    c.nonlinearity = parse_nonlinearity(nonlinearity);
    c.share_towers = share_towers;
    if (!mlp_hidden.empty()) c.mlp_hidden = mlp_hidden;
    c.graphs = parse_graph_mode(graphs);
    c.head = parse_head_kind(head);
    c.trainable_embeddings = trainable_embeddings;
    c.seed = seed;
    c.validate();
    return c;
  }
};

struct TrainFlags {
  std::string bundle;
  std::string embeddings;
  std::size_t embed_dim = 300;
  std::string out;
  std::size_t epochs = 0;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool no_shuffle = false;
  std::string threshold = "uniform_prior";
  bool log_timing = false;

  void add(CLI::App& sub) {
    sub.add_option("--bundle", bundle, "prepared dataset bundle directory");
    sub.add_option("--embeddings", embeddings, "word embedding text file");
    sub.add_option("--embed-dim", embed_dim, "embedding width");
    sub.add_option("--out", out, "output directory");
    sub.add_option("--epochs", epochs, "training epochs (required)");
    sub.add_option("--batch", batch, "mini-batch size");
    sub.add_option("--lr", lr, "SGD learning rate");
    sub.add_option("--seed", seed, "seed for init and shuffle streams");
    sub.add_flag("--no-shuffle", no_shuffle);
    sub.add_option("--threshold", threshold, "uniform_prior | top<k> | fixed:<tau>");
    sub.add_flag("--log-timing", log_timing, "write wall time into runlog.csv");
  }

  void require(const CLI::App& sub) const {
    for (const char* name : {"--bundle", "--embeddings", "--out", "--epochs"})
      if (sub.get_option(name)->count() == 0) throw UsageError(std::string(name) + " is required");
    if (!fs::is_directory(bundle)) throw UsageError("bundle directory '" + bundle + "' not found");
    if (!fs::is_regular_file(embeddings)) throw UsageError("embedding file '" + embeddings + "' not found");
    check_positive("batch", batch);
    check_positive("lr", lr);
    check_positive("embed-dim", embed_dim);
  }

  TrainConfig config() const {
    TrainConfig c;
    c.batch_size = batch;
    c.lr = lr;
    c.epochs = epochs;
    c.seed = seed;
    c.shuffle = !no_shuffle;
    c.threshold = ThresholdPolicy::parse(threshold);
    c.log_timing = log_timing;
    c.validate();
    return c;
  }
};

RunManifest start_manifest(const CLI::App& sub, const std::string& config_path, const std::string& out,
                           std::uint64_t seed) {
  RunManifest m;
  m.command = sub.get_name();
  m.config_path = config_path;
  m.config = resolved_config(sub);
  m.out_dir = out;
  m.seed = seed;
  return m;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_metrics(const fs::path& dir, const std::string& prefix, const MetricsReport& report) {
  write_file(dir / (prefix + "per_label.csv"), [&](std::ostream& o) { report.write_per_label_csv(o); });
  write_file(dir / (prefix + "summary.csv"), [&](std::ostream& o) { report.write_summary_csv(o); });
  write_file(dir / (prefix + "confusion.csv"), [&](std::ostream& o) { report.write_confusion_csv(o); });
}

// ---------------------------------------------------------------- commands

struct PrepareCmd {
  std::string scenes, facts, vocab, labels, out;
  std::uint64_t seed = 0;
  bool reverse_edges = false, reverse_knowledge = false, match_tail = false;

  void add(CLI::App& sub) {
    sub.add_option("--scenes", scenes, "directory of scene-graph JSON files");
    sub.add_option("--facts", facts, "fact store (relation<TAB>head<TAB>tail)");
    sub.add_option("--vocab", vocab, "concept vocabulary, one per line");
    sub.add_option("--labels", labels, "label list, one per line");
    sub.add_option("--out", out, "bundle directory to write");
    sub.add_option("--seed", seed, "split seed");
    sub.add_flag("--reverse-edges", reverse_edges, "add reversed scene edges");
    sub.add_flag("--reverse-knowledge-edges", reverse_knowledge, "add reversed knowledge edges");
    sub.add_flag("--match-tail", match_tail, "also admit facts reached through their tail");
  }

  int run(const CLI::App& sub, const std::string& config_path) {
    for (const char* name : {"--scenes", "--facts", "--vocab", "--labels", "--out"})
      if (sub.get_option(name)->count() == 0) throw UsageError(std::string(name) + " is required");
    if (!fs::is_directory(scenes)) throw UsageError("scene directory '" + scenes + "' not found");
    for (const auto& f : {facts, vocab, labels})
      if (!fs::is_regular_file(f)) throw UsageError("input file '" + f + "' not found");

    RunManifest m = start_manifest(sub, config_path, out, seed);
    m.hashes = {{"scenes", content_hash(scenes)},
                {"facts", content_hash(facts)},
                {"vocab", content_hash(vocab)},
                {"labels", content_hash(labels)}};

    PrepareOptions options;
    options.seed = seed;
    options.reverse_scene_edges = reverse_edges;
    options.knowledge.match_tail = match_tail;
    options.knowledge.add_reverse = reverse_knowledge;
    std::vector<std::string> warnings;
    const Dataset data = prepare_dataset(load_scene_dir(scenes), load_fact_store(facts), load_vocabulary(vocab),
                                         load_labels(labels), options, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    write_bundle(out, data, seed);
    m.write((fs::path(out) / "manifest.json").string());
    std::printf("bundle %s: %zu train / %zu val / %zu test\n", out.c_str(), data.train.size(), data.val.size(),
                data.test.size());
    return 0;
  }
};

struct TrainCmd {
  TrainFlags train;
  ModelFlags model;
  bool dump_attention = false;

  void add(CLI::App& sub) {
    train.add(sub);
    model.add(sub);
    sub.add_flag("--dump-attention", dump_attention, "write attention.csv (attention fusion only)");
  }

  int run(const CLI::App& sub, const std::string& config_path) {
    train.require(sub);
    const TrainConfig tc = train.config();
    const Dataset data = read_bundle(train.bundle);
    const ModelConfig mc = model.config(train.embed_dim, data.labels.size(), train.seed);
    if (dump_attention && mc.fusion == FusionMode::Concat)
      throw UsageError("--dump-attention needs attention or attention_learned fusion");

    const fs::path out(train.out);
    fs::create_directories(out);
    RunManifest m = start_manifest(sub, config_path, train.out, train.seed);
    m.hashes = {{"bundle", content_hash(train.bundle)}, {"embeddings", content_hash(train.embeddings)}};
    m.write((out / "manifest.json").string());

    auto table = std::make_shared<const EmbeddingTable>(load_embeddings(train.embeddings, train.embed_dim));
    SymbolModel net(mc, table);
    TrainResult result = skg::train(net, data, tc, train.out);
    save_checkpoint((out / "final.ckpt").string(), mc, data.labels, net.params());

    // Validation metrics and attention weights come from the best checkpoint.
    Checkpoint best{mc, data.labels, {}};
    for (std::size_t i = 0; i < result.best_params.size(); ++i)
      best.tensors.emplace_back(result.best_params[i].name, result.best_params[i].value);
    restore_params(net.params(), best);
    const auto val = prepare_all(net, data.val, data.labels);
    const MetricsReport report = evaluate(net, val, data.labels, tc.threshold);
    write_metrics(out, "val_", report);

    if (dump_attention) {
      write_file(out / "attention.csv", [&](std::ostream& o) {
        o << "image_id,alpha_kg,alpha_sg\n";
        char buf[96];
        for (const auto* split : {&data.train, &data.val, &data.test})
          for (const auto& ex : *split) {
            Tape tape;
            const auto diag = net.forward(tape, net.prepare(ex, data.labels)).diagnostics;
            std::snprintf(buf, sizeof buf, ",%.10f,%.10f\n", diag.alpha->first, diag.alpha->second);
            o << ex.image_id << buf;
          }
      });
    }
    std::printf("trained %zu epochs; best epoch %zu, val macro F %.4f\n", tc.epochs,
                result.best_epoch.value_or(0), result.best_val_macro_f);
    return 0;
  }
};

struct EvalCmd {
  std::string checkpoint, bundle, embeddings, split = "test", threshold = "uniform_prior", out;

  void add(CLI::App& sub) {
    sub.add_option("--checkpoint", checkpoint, "checkpoint written by train");
    sub.add_option("--bundle", bundle, "prepared dataset bundle directory");
    sub.add_option("--embeddings", embeddings, "word embedding text file");
    sub.add_option("--split", split, "train | val | test");
    sub.add_option("--threshold", threshold, "uniform_prior | top<k> | fixed:<tau>");
    sub.add_option("--out", out, "output directory");
  }

  int run(const CLI::App& sub, const std::string& config_path) {
    for (const char* name : {"--checkpoint", "--bundle", "--embeddings", "--out"})
      if (sub.get_option(name)->count() == 0) throw UsageError(std::string(name) + " is required");
    if (!fs::is_regular_file(checkpoint)) throw UsageError("checkpoint '" + checkpoint + "' not found");
    if (!fs::is_directory(bundle)) throw UsageError("bundle directory '" + bundle + "' not found");
    if (!fs::is_regular_file(embeddings)) throw UsageError("embedding file '" + embeddings + "' not found");
    if (split != "train" && split != "val" && split != "test") throw UsageError("--split must be train, val or test");
    const ThresholdPolicy policy = ThresholdPolicy::parse(threshold);

    const fs::path dir(out);
    fs::create_directories(dir);
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    RunManifest m = start_manifest(sub, config_path, out, ckpt.config.seed);
    m.hashes = {{"checkpoint", content_hash(checkpoint)},
                {"bundle", content_hash(bundle)},
                {"embeddings", content_hash(embeddings)}};
    m.write((dir / "manifest.json").string());

    const Dataset data = read_bundle(bundle);
    if (data.labels != ckpt.labels) throw ConfigError("bundle labels differ from the checkpoint's labels");
    auto table = std::make_shared<const EmbeddingTable>(load_embeddings(embeddings, ckpt.config.embed_dim));
    SymbolModel net(ckpt.config, table);
    restore_params(net.params(), ckpt);
    const auto& examples = split == "train" ? data.train : split == "val" ? data.val : data.test;
    const MetricsReport report = evaluate(net, prepare_all(net, examples, data.labels), data.labels, policy);
    write_metrics(dir, "", report);
    std::printf("%s: %zu examples, macro F %.4f, micro F %.4f (%s)\n", split.c_str(), examples.size(),
                report.macro_f, report.micro_f, report.threshold.c_str());
    return 0;
  }
};

struct AblateCmd {
  TrainFlags train;
  ModelFlags model;
  std::vector<std::size_t> layers;
  bool graphs = false;

  void add(CLI::App& sub) {
    train.add(sub);
    model.add(sub, true);
    auto* l = sub.add_option("--layers", layers, "GCN depths to compare, comma separated")->delimiter(',');
    auto* g = sub.add_flag("--graphs", graphs, "compare sg_only, kg_only and both");
    l->excludes(g);
  }

  int run(const CLI::App& sub, const std::string& config_path) {
    if (layers.empty() == !graphs) throw UsageError("ablate needs exactly one of --layers or --graphs");
    train.require(sub);
    const TrainConfig tc = train.config();
    const Dataset data = read_bundle(train.bundle);
    const ModelConfig base = model.config(train.embed_dim, data.labels.size(), train.seed);

    const fs::path out(train.out);
    fs::create_directories(out);
    RunManifest m = start_manifest(sub, config_path, train.out, train.seed);
    m.hashes = {{"bundle", content_hash(train.bundle)}, {"embeddings", content_hash(train.embeddings)}};
    m.write((out / "manifest.json").string());

    auto table = std::make_shared<const EmbeddingTable>(load_embeddings(train.embeddings, train.embed_dim));
    const auto runs = graphs ? ablate_graphs(base, tc, data, table) : ablate_layers(layers, base, tc, data, table);
    write_file(out / "ablation.csv", [&](std::ostream& o) { write_ablation_csv(o, runs); });
    write_file(out / "ablation_final.csv", [&](std::ostream& o) {
      o << "variant,param_count,final_val_macro_f\n";
      char buf[64];
      for (const auto& r : runs) {
        std::snprintf(buf, sizeof buf, ",%zu,%.4f\n", r.param_count, r.final_val_macro_f);
        o << r.variant << buf;
      }
    });
    for (const auto& r : runs) std::printf("%-10s final val macro F %.4f\n", r.variant.c_str(), r.final_val_macro_f);
    return 0;
  }
};

struct SynthCmd {
  SynthSpec spec;
  std::string pattern = "planted", out;

  void add(CLI::App& sub) {
    sub.add_option("--out", out, "output directory");
    sub.add_option("--pattern", pattern, "planted | dual | paired");
    sub.add_option("--num-labels", spec.num_labels, "labels C (planted only)");
    sub.add_option("--examples", spec.examples, "number of images");
    sub.add_option("--noise", spec.noise, "probability of replacing planted elements");
    sub.add_option("--labels-per-example", spec.labels_per_example);
    sub.add_option("--distractors", spec.max_distractors, "max clutter nodes per image");
    sub.add_option("--pool", spec.pool_size, "dual head-object pool size");
    sub.add_option("--embed-dim", spec.embed_dim, "width of the random embedding table");
    sub.add_option("--seed", spec.seed);
  }

  int run(const CLI::App& sub, const std::string& config_path) {
    if (sub.get_option("--out")->count() == 0) throw UsageError("--out is required");
    spec.pattern = parse_synth_pattern(pattern);
    if (spec.pattern == SynthPattern::Dual) spec.num_labels = 4;
    if (spec.pattern == SynthPattern::Paired) spec.num_labels = 2;
    spec.validate();
    RunManifest m = start_manifest(sub, config_path, out, spec.seed);
    const SynthData data = generate_synth(spec);
    write_synth(out, spec, data);
    m.write((fs::path(out) / "manifest.json").string());
    std::printf("synth %s: %zu labels, %zu train / %zu val / %zu test, %zu facts, %zu words\n", to_string(spec.pattern),
                data.labels.size(), data.dataset.train.size(), data.dataset.val.size(), data.dataset.test.size(),
                data.facts.size(), data.table.size());
    return 0;
  }
};

struct GradcheckCmd {
  GradCheckOptions o;
  std::vector<std::string> fusions{"concat", "attention"};
  std::string nonlinearity = "relu", head = "softmax", fault, out;

  void add(CLI::App& sub) {
    sub.add_option("--embed-dim", o.embed_dim);
    sub.add_option("--hidden", o.hidden_dim);
    sub.add_option("--layers", o.gcn_layers);
    sub.add_option("--num-labels", o.num_labels);
    sub.add_option("--nodes", o.nodes, "nodes per random graph");
    sub.add_option("--fusion", fusions, "fusion modes to check, comma separated")->delimiter(',');
    sub.add_option("--nonlinearity", nonlinearity);
    sub.add_option("--head", head);
    sub.add_flag("--trainable-embeddings", o.trainable_embeddings);
    sub.add_option("--seed", o.seed);
    sub.add_option("--eps", o.eps, "central-difference step");
    sub.add_option("--tolerance", o.tolerance, "max relative error per group");
    sub.add_option("--inject-fault", fault, "corrupt the backward rule of this op (self-test)");
    sub.add_option("--fault-scale", o.fault_scale);
    sub.add_option("--out", out, "CSV report path (default stdout)");
  }

  int run(const CLI::App&, const std::string&) {
    o.nonlinearity = parse_nonlinearity(nonlinearity);
    o.head = parse_head_kind(head);
    if (!fault.empty()) {
      o.fault = op_from_name(fault);
      if (!o.fault) throw UsageError("unknown op '" + fault + "' for --inject-fault (e.g. sparse, linear, mul)");
    }
    check_positive("eps", o.eps);
    std::vector<GradCheckReport> reports;
    for (const auto& f : fusions) {
      o.fusion = parse_fusion_mode(f);
      reports.push_back(gradient_check(o));
    }
    if (out.empty()) {
      write_gradcheck_report(std::cout, reports);
    } else {
      write_file(out, [&](std::ostream& s) { write_gradcheck_report(s, reports); });
    }
    bool ok = true;
    for (const auto& r : reports) {
      std::fprintf(stderr, "%s: max relative error %.3e %s\n", r.fusion.c_str(), r.max_rel_error(),
                   r.passed() ? "pass" : "FAIL");
      ok = ok && r.passed();
    }
    return ok ? 0 : 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symbol classification over scene and knowledge graphs"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads for the kernels (0: runtime default)");

  PrepareCmd prepare;
  TrainCmd train;
  EvalCmd eval;
  AblateCmd ablate;
  SynthCmd synth;
  GradcheckCmd gradcheck;
  struct Entry {
    CLI::App* sub;
    std::function<int(const CLI::App&, const std::string&)> run;
    std::string config;
  };
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(*sub);
    entries.push_back({sub, [&cmd](const CLI::App& s, const std::string& c) { return cmd.run(s, c); }, {}});
  };
  add("prepare", "build a dataset bundle from scene graphs and a fact store", prepare);
  add("train", "train a model on a bundle", train);
  add("eval", "score a checkpoint on one split", eval);
  add("ablate", "compare GCN depths (--layers) or graph subsets (--graphs)", ablate);
  add("synth", "generate a synthetic dataset with planted label signals", synth);
  add("gradcheck", "finite-difference check of every parameter gradient", gradcheck);
  for (auto& e : entries) e.sub->add_option("--config", e.config, "key=value file; flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads < 0) throw UsageError("--threads must be >= 0");
    if (threads > 0) kernels::set_threads(threads);
    for (auto& e : entries) {
      if (!e.sub->parsed()) continue;
      if (!e.config.empty()) merge_config_file(*e.sub, e.config);
      return e.run(*e.sub, e.config);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
