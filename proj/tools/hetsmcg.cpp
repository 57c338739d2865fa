// hetsmcg command-line interface: synthetic corpora, graph building,
// training, evaluation and the cross-validated experiment matrix.
// Exit codes: 0 ok, 1 input error, 2 numerical failure.

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hetsmcg/graph_io.hpp"
#include "hetsmcg/harness.hpp"
#include "hetsmcg/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
      return nullptr;
    case YAML::NodeType::Scalar: {
      // resolve scalars the way JSON would
      try {
        return node.as<bool>();
      } catch (...) {
      }
      try {
        const auto l = node.as<long long>();
        if (std::to_string(l) == node.Scalar()) return l;
      } catch (...) {
      }
      try {
        return node.as<double>();
      } catch (...) {
      }
      return node.as<std::string>();
    }
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    default:
      return nullptr;
  }
}

json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  const std::string ext = path.extension().string();
  if (ext == ".yaml" || ext == ".yml") return yaml_to_json(YAML::LoadFile(path.string()));
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::parse_error&) {
    return yaml_to_json(YAML::LoadFile(path.string()));
  }
}

hetsmcg::ingest::EmbedderSpec parse_embedder(const std::string& arg, std::size_t dtext,
                                             std::uint64_t seed) {
  hetsmcg::ingest::EmbedderSpec spec;
  spec.dim = dtext;
  spec.seed = seed;
  if (arg == "hashing") {
    spec.kind = hetsmcg::ingest::EmbedderSpec::Kind::Hashing;
  } else if (arg.rfind("precomputed:", 0) == 0) {
    spec.kind = hetsmcg::ingest::EmbedderSpec::Kind::Precomputed;
    spec.lookup_file = arg.substr(std::string("precomputed:").size());
  } else {
    throw std::runtime_error("unknown embedder '" + arg + "' (use hashing or precomputed:FILE)");
  }
  return spec;
}

struct GraphSet {
  std::vector<hetsmcg::gnn::GraphTensors> graphs;
  hetsmcg::hetgraph::DatasetManifest manifest;
  std::size_t dtext = 0;
  bool social = false;
};

GraphSet load_graph_dir(const fs::path& dir, hetsmcg::harness::GraphVariant variant) {
  GraphSet out;
  out.manifest = hetsmcg::hetgraph::load_manifest(dir);
  for (const auto& entry : out.manifest.entries) {
    const auto g = hetsmcg::hetgraph::load_graph(dir / entry.file);
    out.dtext = g.features_of(hetsmcg::hetgraph::NodeType::News).cols();
    const auto& tweets = g.features_of(hetsmcg::hetgraph::NodeType::Tweet);
    if (tweets.rows() > 0 && tweets.cols() != out.dtext) out.social = true;
    if (variant == hetsmcg::harness::GraphVariant::Hetero) {
      out.graphs.push_back(hetsmcg::gnn::prepare(g));
    } else {
      const auto flat = hetsmcg::hetgraph::flatten(
          g, variant == hetsmcg::harness::GraphVariant::HomoPad
                 ? hetsmcg::hetgraph::FlattenMode::Pad
                 : hetsmcg::hetgraph::FlattenMode::Truncate);
      out.graphs.push_back(hetsmcg::gnn::prepare(flat));
    }
  }
  if (out.graphs.empty()) throw std::runtime_error("no graphs found in " + dir.string());
  return out;
}

hetsmcg::harness::MatrixConfig matrix_config_from_json(const json& j) {
  using hetsmcg::harness::MatrixConfig;
  MatrixConfig cfg;
  if (j.contains("setups")) {
    cfg.setups.clear();
    for (int s : j.at("setups")) cfg.setups.push_back(hetsmcg::ingest::setup_from_number(s));
  }
  if (j.contains("features")) {
    cfg.features.clear();
    for (const auto& f : j.at("features"))
      cfg.features.push_back(
          hetsmcg::harness::feature_mode_from_string(f.get<std::string>()));
  }
  if (j.contains("convs")) {
    cfg.convs.clear();
    for (const auto& c : j.at("convs"))
      cfg.convs.push_back(hetsmcg::gnn::conv_from_string(c.get<std::string>()));
  }
  if (j.contains("modes")) {
    cfg.modes.clear();
    for (const auto& m : j.at("modes"))
      cfg.modes.push_back(hetsmcg::harness::variant_from_string(m.get<std::string>()));
  }
  cfg.dtext = j.value("dtext", std::size_t{64});
  cfg.folds = j.value("folds", 5);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.hidden_dim = j.value("hidden_dim", 64);
  cfg.heads = j.value("heads", 1);
  cfg.readout = j.value("readout", "news_node") == std::string("mean_all")
                    ? hetsmcg::gnn::Readout::MeanAll
                    : hetsmcg::gnn::Readout::NewsNode;
  cfg.train.epochs = j.value("epochs", 20);
  cfg.train.batch_size = j.value("batch_size", 16);
  cfg.train.learning_rate = j.value("learning_rate", 8e-5);
  cfg.train.use_class_weights = j.value("use_class_weights", true);
  cfg.train.seed = cfg.seed;
  if (j.contains("embedder")) {
    const auto& e = j.at("embedder");
    cfg.embedder = parse_embedder(e.value("kind", "hashing") == std::string("precomputed")
                                      ? "precomputed:" + e.value("file", std::string{})
                                      : "hashing",
                                  cfg.dtext, e.value("seed", std::uint64_t{0}));
    if (e.value("miss_policy", "error") == std::string("zero"))
      cfg.embedder.miss_policy = hetsmcg::ingest::MissPolicy::ZeroVector;
  }
  return cfg;
}

int cmd_gen_synth(const fs::path& out, std::size_t articles, double fake_frac,
                  std::uint64_t seed, double beta, std::size_t dtext, bool null_signal) {
  hetsmcg::synth::SynthConfig cfg =
      null_signal ? hetsmcg::synth::SynthConfig::null_signal(seed) : hetsmcg::synth::SynthConfig{};
  cfg.n_articles = articles;
  cfg.fake_fraction = fake_frac;
  cfg.seed = seed;
  if (!null_signal) cfg.beta = beta;
  cfg.suggested_dtext = dtext;
  const auto book = hetsmcg::synth::generate_corpus(cfg, out);
  std::size_t fake = 0;
  for (const auto& a : book.articles) fake += a.label;
  std::cout << "wrote " << book.articles.size() << " articles (" << fake << " fake) to " << out
            << "\n";
  return 0;
}

int cmd_build_graphs(const fs::path& corpus_dir, const fs::path& out, int setup_num,
                     const std::string& features, std::size_t dtext,
                     const std::string& embedder_arg, std::uint64_t embed_seed, int folds,
                     std::uint64_t fold_seed) {
  const auto corpus = hetsmcg::ingest::load_corpus(corpus_dir);
  auto spec = parse_embedder(embedder_arg, dtext, embed_seed);
  hetsmcg::ingest::TextEmbedder embedder(spec);
  const auto setup = hetsmcg::ingest::setup_from_number(setup_num);
  const auto mode = hetsmcg::harness::feature_mode_from_string(features);

  const auto report = hetsmcg::ingest::build_dataset(corpus, setup, mode, embedder);

  std::vector<int> labels;
  for (const auto& g : report.graphs) labels.push_back(g.label);
  const auto split = hetsmcg::harness::stratified_kfold(labels, folds, fold_seed);

  hetsmcg::hetgraph::DatasetManifest manifest;
  manifest.num_folds = folds;
  manifest.fold_seed = fold_seed;
  for (std::size_t i = 0; i < report.graphs.size(); ++i)
    manifest.entries.push_back({report.graphs[i].article_id, report.graphs[i].label,
                                report.graphs[i].article_id + ".json", split.assignment[i]});
  hetsmcg::hetgraph::save_dataset(out, report.graphs, manifest);

  json folds_json{{"num_folds", folds}, {"seed", fold_seed}, {"assignment", json::object()}};
  for (const auto& e : manifest.entries) folds_json["assignment"][e.id] = e.fold;
  std::ofstream fj(out / "folds.json");
  fj << folds_json.dump(1) << "\n";

  std::cout << "built " << report.graphs.size() << " graphs (" << report.skipped.size()
            << " skipped) in " << out << "\n";
  for (const auto& s : report.skipped)
    std::cout << "  skipped " << s.article_id << ": " << s.reason << "\n";
  if (corpus.warnings > 0) std::cout << "  corpus warnings: " << corpus.warnings << "\n";
  return 0;
}

int cmd_train(const fs::path& graphs_dir, const std::string& conv, const std::string& mode,
              int epochs, int batch, double lr, std::uint64_t seed, int hidden, int heads,
              bool no_class_weights, const fs::path& out) {
  const auto variant = hetsmcg::harness::variant_from_string(mode);
  const GraphSet set = load_graph_dir(graphs_dir, variant);

  hetsmcg::gnn::ModelConfig mc;
  mc.conv = hetsmcg::gnn::conv_from_string(conv);
  mc.hidden_dim = hidden;
  mc.heads = heads;
  mc.mode = variant == hetsmcg::harness::GraphVariant::Hetero ? hetsmcg::gnn::GraphMode::Hetero
                                                              : hetsmcg::gnn::GraphMode::Homo;
  hetsmcg::gnn::DimInfo dims;
  dims.per_type = {set.dtext, set.dtext + (set.social ? 2 : 0),
                   set.dtext + (set.social ? 4 : 0)};
  dims.homo = variant == hetsmcg::harness::GraphVariant::HomoPad ? set.dtext + 4 : set.dtext;

  hetsmcg::harness::TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.learning_rate = lr;
  tc.use_class_weights = !no_class_weights;
  tc.seed = seed;

  std::vector<const hetsmcg::gnn::GraphTensors*> train;
  for (const auto& g : set.graphs) train.push_back(&g);
  const auto result = hetsmcg::harness::train_fold(train, tc, mc, dims, seed);

  hetsmcg::gnn::save_checkpoint(out, mc, dims, result.params);
  std::cout << "trained on " << train.size() << " graphs; final epoch loss "
            << result.epoch_loss.back() << "; checkpoint " << out << "\n";
  return 0;
}

int cmd_evaluate(const fs::path& graphs_dir, const fs::path& ckpt_file,
                 const fs::path& folds_file) {
  const auto ckpt = hetsmcg::gnn::load_checkpoint(ckpt_file);
  const auto variant = ckpt.config.mode == hetsmcg::gnn::GraphMode::Hetero
                           ? hetsmcg::harness::GraphVariant::Hetero
                           : (ckpt.dims.homo > ckpt.dims.per_type[0]
                                  ? hetsmcg::harness::GraphVariant::HomoPad
                                  : hetsmcg::harness::GraphVariant::HomoTruncate);
  const GraphSet set = load_graph_dir(graphs_dir, variant);

  std::vector<const hetsmcg::gnn::GraphTensors*> all;
  for (const auto& g : set.graphs) all.push_back(&g);
  const auto overall = hetsmcg::harness::evaluate(ckpt.params, ckpt.config, all);

  json out{{"overall", hetsmcg::harness::metrics_to_json(overall)}};
  if (!folds_file.empty()) {
    std::ifstream in(folds_file);
    if (!in) throw std::runtime_error("cannot read folds file " + folds_file.string());
    json fj;
    in >> fj;
    const auto& assignment = fj.at("assignment");
    const int k = fj.value("num_folds", 5);
    json per_fold = json::array();
    for (int f = 0; f < k; ++f) {
      std::vector<const hetsmcg::gnn::GraphTensors*> fold;
      for (std::size_t i = 0; i < set.graphs.size(); ++i)
        if (assignment.value(set.manifest.entries[i].id, -1) == f)
          fold.push_back(&set.graphs[i]);
      if (fold.empty()) continue;
      per_fold.push_back(
          hetsmcg::harness::metrics_to_json(hetsmcg::harness::evaluate(ckpt.params, ckpt.config, fold)));
    }
    out["folds"] = std::move(per_fold);
  }
  std::cout << out.dump(1) << "\n";
  return 0;
}

int cmd_run_matrix(const fs::path& corpus_dir, const fs::path& config_file,
                   const fs::path& out_file) {
  const json config = load_config_file(config_file);
  const auto cfg = matrix_config_from_json(config);
  const auto corpus = hetsmcg::ingest::load_corpus(corpus_dir);

  const auto start = std::chrono::steady_clock::now();
  const auto report = hetsmcg::harness::run_matrix(corpus, cfg);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  hetsmcg::harness::save_report(out_file, report);
  const std::string table = hetsmcg::harness::report_to_table(report);
  fs::path table_file = out_file;
  table_file.replace_extension(".txt");
  {
    std::ofstream tf(table_file);
    tf << table;
    char buf[64];
    std::snprintf(buf, sizeof buf, "\nwall clock: %.1f s\n", wall);
    tf << buf;
  }
  std::cout << table;
  std::cout << "\nwall clock: " << wall << " s\nreport: " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous social-media context graphs for fake-news detection"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic corpus");
  fs::path gen_out;
  std::size_t gen_articles = 200;
  double gen_frac = 0.5, gen_beta = 0.6;
  std::uint64_t gen_seed = 0;
  std::size_t gen_dtext = 64;
  bool gen_null = false;
  gen->add_option("--out", gen_out, "output corpus directory")->required();
  gen->add_option("--articles", gen_articles, "number of articles");
  gen->add_option("--fake-frac", gen_frac, "fraction of fake articles");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--beta", gen_beta, "fake-topic word bias");
  gen->add_option("--dtext", gen_dtext, "suggested embedding dim recorded in bookkeeping");
  gen->add_flag("--null-signal", gen_null, "disable all label-dependent signal");

  // build-graphs
  auto* build = app.add_subcommand("build-graphs", "build per-article graphs from a corpus");
  fs::path b_corpus, b_out;
  int b_setup = 5;
  std::string b_features = "text";
  std::size_t b_dtext = 64;
  std::string b_embedder = "hashing";
  std::uint64_t b_embed_seed = 0, b_fold_seed = 0;
  int b_folds = 5;
  build->add_option("--corpus", b_corpus, "corpus directory")->required();
  build->add_option("--out", b_out, "output graph directory")->required();
  build->add_option("--setup", b_setup, "inclusion setup 1..5")->check(CLI::Range(1, 5));
  build->add_option("--features", b_features, "text | text+social");
  build->add_option("--dtext", b_dtext, "text embedding dim");
  build->add_option("--embedder", b_embedder, "hashing | precomputed:FILE");
  build->add_option("--embed-seed", b_embed_seed, "hashing embedder seed");
  build->add_option("--folds", b_folds, "number of folds recorded in the manifest");
  build->add_option("--fold-seed", b_fold_seed, "fold assignment seed");

  // train
  auto* train = app.add_subcommand("train", "train one model on a graph directory");
  fs::path t_graphs, t_out;
  std::string t_conv = "hgt", t_mode = "hetero";
  int t_epochs = 20, t_batch = 16, t_hidden = 64, t_heads = 1;
  double t_lr = 8e-5;
  std::uint64_t t_seed = 0;
  bool t_no_weights = false;
  train->add_option("--graphs", t_graphs, "graph directory")->required();
  train->add_option("--conv", t_conv, "sage | gat | hgt");
  train->add_option("--mode", t_mode, "hetero | homo-truncate | homo-pad");
  train->add_option("--epochs", t_epochs, "train epochs");
  train->add_option("--batch", t_batch, "batch size");
  train->add_option("--lr", t_lr, "learning rate");
  train->add_option("--seed", t_seed, "rng seed");
  train->add_option("--hidden", t_hidden, "hidden dim");
  train->add_option("--heads", t_heads, "attention heads");
  train->add_flag("--no-class-weights", t_no_weights, "disable class weighting");
  train->add_option("--out", t_out, "checkpoint file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a graph directory");
  fs::path e_graphs, e_ckpt, e_folds;
  eval->add_option("--graphs", e_graphs, "graph directory")->required();
  eval->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  eval->add_option("--folds", e_folds, "folds file for per-fold metrics");

  // run-matrix
  auto* matrix = app.add_subcommand("run-matrix", "run the cross-validated experiment matrix");
  fs::path m_corpus, m_config, m_out = "report.json";
  matrix->add_option("--corpus", m_corpus, "corpus directory")->required();
  matrix->add_option("--config", m_config, "matrix config (JSON or YAML)")->required();
  matrix->add_option("--out", m_out, "output report path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_synth(gen_out, gen_articles, gen_frac, gen_seed, gen_beta, gen_dtext,
                           gen_null);
    if (build->parsed())
      return cmd_build_graphs(b_corpus, b_out, b_setup, b_features, b_dtext, b_embedder,
                              b_embed_seed, b_folds, b_fold_seed);
    if (train->parsed())
      return cmd_train(t_graphs, t_conv, t_mode, t_epochs, t_batch, t_lr, t_seed, t_hidden,
                       t_heads, t_no_weights, t_out);
    if (eval->parsed()) return cmd_evaluate(e_graphs, e_ckpt, e_folds);
    if (matrix->parsed()) return cmd_run_matrix(m_corpus, m_config, m_out);
  } catch (const hetsmcg::harness::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
