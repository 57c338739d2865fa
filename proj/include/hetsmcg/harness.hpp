#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsmcg/gnn.hpp"
#include "hetsmcg/ingest.hpp"
#include "hetsmcg/metrics.hpp"
#include "json.hpp"

namespace hetsmcg::harness {

using nlohmann::json;

/// Thrown when training produces non-finite values; maps to exit code 2.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return ingest::detail::mix64(ingest::detail::mix64(seed ^ (a * 0x9e3779b97f4a7c15ull)) ^ b);
}

// ---- fold split ----

struct FoldSplit {
  int k = 5;
  std::uint64_t seed = 0;
  std::vector<int> assignment;  // fold id per sample index

  std::vector<std::vector<std::size_t>> folds() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
    return out;
  }

  std::string hash() const {
    std::string bytes;
    bytes.reserve(assignment.size());
    for (int a : assignment) bytes.push_back(static_cast<char>('0' + a));
    const std::uint64_t h = ingest::detail::fnv1a64(bytes) ^ seed;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

/// Stratified k-fold: per-class proportional allocation with the remainder
/// dealt round-robin; deterministic per seed.
inline FoldSplit stratified_kfold(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be >= 2");
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.assignment.assign(labels.size(), -1);
  std::mt19937_64 rng(derive_seed(seed, 0xf01d));
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.size() < static_cast<std::size_t>(k))
      throw std::invalid_argument("stratified_kfold: class " + std::to_string(c) +
                                  " has fewer than k samples");
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < idx.size(); ++i)
      split.assignment[idx[i]] = static_cast<int>(i % k);
  }
  return split;
}

/// Inverse-frequency class weights, normalized so balanced data gives [1, 1].
inline std::array<double, 2> class_weights(const std::vector<int>& labels) {
  std::array<std::size_t, 2> counts{};
  for (int l : labels) counts[l]++;
  if (counts[0] == 0 || counts[1] == 0)
    throw std::invalid_argument("class_weights: both classes must be present");
  const double n = static_cast<double>(labels.size());
  return {n / (2.0 * static_cast<double>(counts[0])),
          n / (2.0 * static_cast<double>(counts[1]))};
}

// ---- training ----

struct TrainConfig {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 8e-5;
  bool use_class_weights = true;
  std::uint64_t seed = 0;
};

struct TrainResult {
  gnn::ModelParams params;
  std::vector<double> epoch_loss;
};

/// Seeded per-epoch shuffles, fixed batch size, one Adam step per batch,
/// exactly `epochs` epochs, no early stopping.
inline TrainResult train_fold(const std::vector<const gnn::GraphTensors*>& train,
                              const TrainConfig& tc, const gnn::ModelConfig& mc,
                              const gnn::DimInfo& dims, std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("train_fold: empty training set");

  std::vector<int> labels;
  labels.reserve(train.size());
  for (const auto* g : train) labels.push_back(g->label);
  const std::array<double, 2> weights =
      tc.use_class_weights ? class_weights(labels) : std::array<double, 2>{1.0, 1.0};

  TrainResult result;
  result.params = gnn::init_params(mc, dims, derive_seed(seed, 0x1217));
  numkit::AdamConfig adam_cfg;
  adam_cfg.lr = tc.learning_rate;
  numkit::Adam optimizer(result.params.tensors(), adam_cfg);

  std::mt19937_64 shuffle_rng(derive_seed(seed, 0x5f5f));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      numkit::Tape tape;
      numkit::Tensor batch_loss;
      for (std::size_t i = start; i < end; ++i) {
        const gnn::GraphTensors& g = *train[order[i]];
        const numkit::Tensor logits = gnn::forward(tape, g, result.params, mc);
        const numkit::Tensor sample =
            tape.weighted_cross_entropy(logits, {g.label}, weights);
        batch_loss = batch_loss.defined() ? tape.add(batch_loss, sample) : sample;
      }
      batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(batch_loss.item()))
        throw NumericalError("train_fold: non-finite loss at epoch " + std::to_string(epoch));
      optimizer.zero_grad();
      tape.backward(batch_loss);
      optimizer.step();
      epoch_loss += batch_loss.item() * static_cast<double>(end - start);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

/// Argmax predictions (ties go to class 0) and evaluation metrics.
inline Metrics evaluate(const gnn::ModelParams& params, const gnn::ModelConfig& mc,
                        const std::vector<const gnn::GraphTensors*>& test,
                        std::vector<int>* predictions_out = nullptr) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<int> preds, labels;
  preds.reserve(test.size());
  for (const auto* g : test) {
    numkit::Tape tape;
    const numkit::Tensor logits = gnn::forward(tape, *g, params, mc);
    preds.push_back(logits.value(0, 1) > logits.value(0, 0) ? 1 : 0);
    labels.push_back(g->label);
  }
  if (predictions_out) *predictions_out = preds;
  return compute_metrics(preds, labels);
}

// ---- significance ----

struct SignificanceResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  bool significant_raw = false;
  bool significant_bonferroni = false;
  int n_comparisons = 1;
  std::string note;  // degenerate-variance handling, if any
};

/// Two-sided paired t-test on per-fold scores, Bonferroni-adjusted at 0.05.
inline SignificanceResult significance(const std::vector<double>& fold_scores_a,
                                       const std::vector<double>& fold_scores_b,
                                       int n_comparisons) {
  if (fold_scores_a.size() != fold_scores_b.size() || fold_scores_a.size() < 2)
    throw std::logic_error("significance: fold score vectors must pair up");
  const std::size_t n = fold_scores_a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = fold_scores_a[i] - fold_scores_b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);

  SignificanceResult res;
  res.n_comparisons = std::max(1, n_comparisons);
  if (var == 0.0) {
    if (mean == 0.0) {
      res.p_value = 1.0;
      res.note = "no difference between paired fold scores";
    } else {
      res.p_value = 0.0;
      res.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity()
                                 : -std::numeric_limits<double>::infinity();
      res.note = "zero variance of paired differences";
    }
  } else {
    res.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    res.p_value = 2.0 * boost::math::cdf(dist, -std::fabs(res.t_statistic));
  }
  res.significant_raw = res.p_value < 0.05;
  res.significant_bonferroni = res.p_value < 0.05 / static_cast<double>(res.n_comparisons);
  return res;
}

// ---- experiment matrix ----

enum class GraphVariant { Hetero, HomoTruncate, HomoPad };

inline const char* to_string(GraphVariant v) {
  switch (v) {
    case GraphVariant::Hetero: return "hetero";
    case GraphVariant::HomoTruncate: return "homo-truncate";
    case GraphVariant::HomoPad: return "homo-pad";
  }
  throw std::logic_error("unknown graph variant");
}

inline GraphVariant variant_from_string(const std::string& s) {
  if (s == "hetero") return GraphVariant::Hetero;
  if (s == "homo-truncate") return GraphVariant::HomoTruncate;
  if (s == "homo-pad") return GraphVariant::HomoPad;
  throw std::invalid_argument("unknown graph mode: " + s);
}

inline const char* to_string(ingest::FeatureMode m) {
  return m == ingest::FeatureMode::TextOnly ? "text" : "text+social";
}

inline ingest::FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "text") return ingest::FeatureMode::TextOnly;
  if (s == "text+social") return ingest::FeatureMode::TextPlusSocial;
  throw std::invalid_argument("unknown feature mode: " + s);
}

struct MatrixConfig {
  std::vector<ingest::Setup> setups{ingest::Setup::S5_All};
  std::vector<ingest::FeatureMode> features{ingest::FeatureMode::TextOnly};
  std::vector<gnn::ConvType> convs{gnn::ConvType::Hgt};
  std::vector<GraphVariant> modes{GraphVariant::Hetero};
  std::size_t dtext = 64;
  ingest::EmbedderSpec embedder{};  // dim is overwritten with dtext
  TrainConfig train{};
  int folds = 5;
  std::uint64_t seed = 0;
  int hidden_dim = 64;
  int heads = 1;
  gnn::Readout readout = gnn::Readout::NewsNode;
};

struct CellKey {
  int setup;
  std::string features;
  std::string conv;
  std::string mode;

  std::string str() const {
    return "s" + std::to_string(setup) + "/" + features + "/" + conv + "/" + mode;
  }
};

struct CellResult {
  CellKey key;
  std::vector<Metrics> fold_metrics;
  Metrics mean;
  std::string fingerprint;
};

struct SignificancePair {
  std::string cell_a, cell_b;
  SignificanceResult result;
};

struct MatrixReport {
  json config_echo;
  std::string fold_hash;
  std::vector<std::vector<std::string>> fold_article_ids;
  std::vector<CellResult> cells;
  std::vector<SignificancePair> significance;
  std::string significance_test =
      "two-sided paired t-test on per-fold macro-F1; Bonferroni-adjusted alpha 0.05";
};

namespace detail {

inline Metrics mean_of(const std::vector<Metrics>& folds) {
  Metrics m;
  for (const auto& f : folds) {
    m.precision += f.precision;
    m.recall += f.recall;
    m.macro_f1 += f.macro_f1;
    m.accuracy += f.accuracy;
    m.zero_division = m.zero_division || f.zero_division;
  }
  const double n = static_cast<double>(folds.size());
  m.precision /= n;
  m.recall /= n;
  m.macro_f1 /= n;
  m.accuracy /= n;
  return m;
}

inline gnn::DimInfo dims_for(const std::vector<gnn::GraphTensors>& hetero_graphs,
                             GraphVariant variant, std::size_t dtext,
                             ingest::FeatureMode features) {
  gnn::DimInfo dims;
  const bool social = features == ingest::FeatureMode::TextPlusSocial;
  dims.per_type = {dtext, dtext + (social ? 2 : 0), dtext + (social ? 4 : 0)};
  dims.homo = variant == GraphVariant::HomoPad ? dtext + 4 : dtext;
  static_cast<void>(hetero_graphs);
  return dims;
}

}  // namespace detail

/// One cross-validated experiment for a fixed cell; folds and per-fold seeds
/// are supplied by the caller so every cell shares the identical split.
inline CellResult run_cell(const std::vector<gnn::GraphTensors>& graphs,
                           const FoldSplit& split, const CellKey& key,
                           const gnn::ModelConfig& mc, const gnn::DimInfo& dims,
                           const TrainConfig& tc, std::uint64_t cell_seed) {
  CellResult cell;
  cell.key = key;
  const auto folds = split.folds();
  for (int f = 0; f < split.k; ++f) {
    std::vector<const gnn::GraphTensors*> train, test;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
      if (split.assignment[i] == f)
        test.push_back(&graphs[i]);
      else
        train.push_back(&graphs[i]);
    }
    const TrainResult trained =
        train_fold(train, tc, mc, dims, derive_seed(cell_seed, 0x70fd + f));
    cell.fold_metrics.push_back(evaluate(trained.params, mc, test));
  }
  cell.mean = detail::mean_of(cell.fold_metrics);
  cell.fingerprint = gnn::config_hash(mc);
  return cell;
}

inline MatrixReport run_matrix(const ingest::CorpusIndex& corpus, const MatrixConfig& cfg) {
  MatrixReport report;

  // graphs per (setup, features): built once, kept set shared by construction
  struct BuiltCell {
    std::vector<gnn::GraphTensors> hetero;
    std::map<GraphVariant, std::vector<gnn::GraphTensors>> flat;
    std::vector<std::string> ids;
    std::vector<int> labels;
  };
  std::map<std::pair<int, std::string>, BuiltCell> built;

  ingest::EmbedderSpec espec = cfg.embedder;
  espec.dim = cfg.dtext;

  FoldSplit split;
  bool have_split = false;

  for (ingest::Setup setup : cfg.setups) {
    for (ingest::FeatureMode features : cfg.features) {
      ingest::TextEmbedder embedder(espec);
      auto ds = ingest::build_dataset(corpus, setup, features, embedder);
      BuiltCell cell;
      for (auto& g : ds.graphs) {
        cell.ids.push_back(g.article_id);
        cell.labels.push_back(g.label);
        cell.hetero.push_back(gnn::prepare(g));
        for (GraphVariant v : cfg.modes) {
          if (v == GraphVariant::Hetero) continue;
          const auto flat = hetgraph::flatten(g, v == GraphVariant::HomoPad
                                                     ? hetgraph::FlattenMode::Pad
                                                     : hetgraph::FlattenMode::Truncate);
          cell.flat[v].push_back(gnn::prepare(flat));
        }
      }
      if (!have_split) {
        split = stratified_kfold(cell.labels, cfg.folds, cfg.seed);
        have_split = true;
        report.fold_hash = split.hash();
        report.fold_article_ids.assign(cfg.folds, {});
        for (std::size_t i = 0; i < cell.ids.size(); ++i)
          report.fold_article_ids[split.assignment[i]].push_back(cell.ids[i]);
      } else {
        // every cell must see the identical article set and split
        const auto& first = built.begin()->second;
        if (cell.ids != first.ids)
          throw std::logic_error("run_matrix: article sets diverged across setups");
      }
      built.emplace(std::make_pair(ingest::setup_number(setup), std::string(to_string(features))),
                    std::move(cell));
    }
  }
  if (!have_split) throw std::invalid_argument("run_matrix: empty configuration");

  std::uint64_t cell_index = 0;
  for (ingest::Setup setup : cfg.setups) {
    for (ingest::FeatureMode features : cfg.features) {
      const auto& bc =
          built.at({ingest::setup_number(setup), std::string(to_string(features))});
      for (gnn::ConvType conv : cfg.convs) {
        for (GraphVariant variant : cfg.modes) {
          gnn::ModelConfig mc;
          mc.conv = conv;
          mc.hidden_dim = cfg.hidden_dim;
          mc.heads = cfg.heads;
          mc.readout = cfg.readout;
          mc.mode = variant == GraphVariant::Hetero ? gnn::GraphMode::Hetero
                                                    : gnn::GraphMode::Homo;
          const gnn::DimInfo dims =
              detail::dims_for(bc.hetero, variant, cfg.dtext, features);
          const CellKey key{ingest::setup_number(setup), to_string(features),
                            gnn::to_string(conv), to_string(variant)};
          const auto& graphs =
              variant == GraphVariant::Hetero ? bc.hetero : bc.flat.at(variant);
          report.cells.push_back(run_cell(graphs, split, key, mc, dims, cfg.train,
                                          derive_seed(cfg.seed, 0xce11, cell_index)));
          ++cell_index;
        }
      }
    }
  }

  // hetero-vs-homo comparisons within each (setup, features, conv) group
  auto find_cell = [&](const CellKey& k) -> const CellResult* {
    for (const auto& c : report.cells)
      if (c.key.str() == k.str()) return &c;
    return nullptr;
  };
  std::vector<std::pair<const CellResult*, const CellResult*>> pairs;
  for (ingest::Setup setup : cfg.setups)
    for (ingest::FeatureMode features : cfg.features)
      for (gnn::ConvType conv : cfg.convs) {
        const CellKey het{ingest::setup_number(setup), to_string(features),
                          gnn::to_string(conv), "hetero"};
        const CellResult* a = find_cell(het);
        if (!a) continue;
        for (const char* homo : {"homo-truncate", "homo-pad"}) {
          const CellKey hk{het.setup, het.features, het.conv, homo};
          if (const CellResult* b = find_cell(hk)) pairs.emplace_back(a, b);
        }
      }
  const int n_comparisons = static_cast<int>(pairs.size());
  for (const auto& [a, b] : pairs) {
    std::vector<double> sa, sb;
    for (const auto& f : a->fold_metrics) sa.push_back(f.macro_f1);
    for (const auto& f : b->fold_metrics) sb.push_back(f.macro_f1);
    report.significance.push_back(
        {a->key.str(), b->key.str(), significance(sa, sb, n_comparisons)});
  }

  report.config_echo = json{
      {"setups", [&] {
         std::vector<int> v;
         for (auto s : cfg.setups) v.push_back(ingest::setup_number(s));
         return v;
       }()},
      {"features", [&] {
         std::vector<std::string> v;
         for (auto f : cfg.features) v.emplace_back(to_string(f));
         return v;
       }()},
      {"convs", [&] {
         std::vector<std::string> v;
         for (auto c : cfg.convs) v.emplace_back(gnn::to_string(c));
         return v;
       }()},
      {"modes", [&] {
         std::vector<std::string> v;
         for (auto m : cfg.modes) v.emplace_back(to_string(m));
         return v;
       }()},
      {"dtext", cfg.dtext},
      {"folds", cfg.folds},
      {"seed", cfg.seed},
      {"hidden_dim", cfg.hidden_dim},
      {"heads", cfg.heads},
      {"epochs", cfg.train.epochs},
      {"batch_size", cfg.train.batch_size},
      {"learning_rate", cfg.train.learning_rate},
      {"use_class_weights", cfg.train.use_class_weights}};
  return report;
}

// ---- report io ----

inline json metrics_to_json(const Metrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"macro_f1", m.macro_f1},
          {"accuracy", m.accuracy},
          {"zero_division", m.zero_division}};
}

inline json report_to_json(const MatrixReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json folds = json::array();
    for (const auto& f : c.fold_metrics) folds.push_back(metrics_to_json(f));
    cells.push_back({{"cell", c.key.str()},
                     {"setup", c.key.setup},
                     {"features", c.key.features},
                     {"conv", c.key.conv},
                     {"mode", c.key.mode},
                     {"folds", std::move(folds)},
                     {"mean", metrics_to_json(c.mean)},
                     {"config_fingerprint", c.fingerprint}});
  }
  json sig = json::array();
  for (const auto& s : report.significance)
    sig.push_back({{"a", s.cell_a},
                   {"b", s.cell_b},
                   {"p_value", s.result.p_value},
                   {"t_statistic", std::isfinite(s.result.t_statistic) ? json(s.result.t_statistic)
                                                                       : json(nullptr)},
                   {"n_comparisons", s.result.n_comparisons},
                   {"significant_raw", s.result.significant_raw},
                   {"significant_bonferroni", s.result.significant_bonferroni},
                   {"note", s.result.note}});
  return json{{"config", report.config_echo},
              {"fold_split", {{"hash", report.fold_hash}, {"folds", report.fold_article_ids}}},
              {"significance_test", report.significance_test},
              {"cells", std::move(cells)},
              {"significance", std::move(sig)}};
}

/// Plain-text companion table: one row per cell, macro-F1 and accuracy.
inline std::string report_to_table(const MatrixReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-34s %10s %10s %10s %10s\n", "cell", "F1", "ACC", "P", "R");
  out += line;
  out += std::string(78, '-') + "\n";
  for (const auto& c : report.cells) {
    std::snprintf(line, sizeof line, "%-34s %10.4f %10.4f %10.4f %10.4f\n", c.key.str().c_str(),
                  c.mean.macro_f1, c.mean.accuracy, c.mean.precision, c.mean.recall);
    out += line;
  }
  if (!report.significance.empty()) {
    out += "\nsignificance (" + report.significance_test + ")\n";
    for (const auto& s : report.significance) {
      std::snprintf(line, sizeof line, "%-24s vs %-24s p=%.6f%s\n", s.cell_a.c_str(),
                    s.cell_b.c_str(), s.result.p_value,
                    s.result.significant_bonferroni ? "  **" : "");
      out += line;
    }
  }
  return out;
}

inline void save_report(const std::filesystem::path& file, const MatrixReport& report) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write report " + file.string());
  out << report_to_json(report).dump(1) << "\n";
}

}  // namespace hetsmcg::harness
