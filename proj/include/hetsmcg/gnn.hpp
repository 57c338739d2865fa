#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsmcg/embedder.hpp"
#include "hetsmcg/hetgraph.hpp"
#include "hetsmcg/numkit.hpp"
#include "json.hpp"

namespace hetsmcg::gnn {

using numkit::Matrix;
using numkit::Tape;
using numkit::Tensor;

enum class ConvType { Sage, Gat, Hgt };
enum class GraphMode { Hetero, Homo };
enum class Readout { NewsNode, MeanAll };
enum class Activation { Relu, Elu };

struct ModelConfig {
  ConvType conv = ConvType::Sage;
  int hidden_dim = 64;
  int n_layers = 2;  // fixed: two-layer networks
  int heads = 1;
  Activation activation = Activation::Elu;
  Readout readout = Readout::NewsNode;
  GraphMode mode = GraphMode::Hetero;
  double attention_leak = 0.2;  // LeakyReLU slope in attention scores
};

inline void validate_config(const ModelConfig& cfg) {
  if (cfg.n_layers != 2) throw std::invalid_argument("ModelConfig: n_layers is fixed at 2");
  if (cfg.hidden_dim <= 0) throw std::invalid_argument("ModelConfig: hidden_dim must be positive");
  if (cfg.heads <= 0 || cfg.hidden_dim % cfg.heads != 0)
    throw std::invalid_argument("ModelConfig: heads must divide hidden_dim");
}

/// Input feature dims: per node type in hetero mode, single dim in homo mode.
struct DimInfo {
  std::array<std::size_t, 3> per_type{};
  std::size_t homo = 0;
};

/// Named parameter tensors in a deterministic insertion order.
class ModelParams {
 public:
  void add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw std::logic_error("ModelParams: duplicate name " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ModelParams: missing parameter " + name);
    return entries_[it->second].second;
  }
  Tensor& at(const std::string& name) {
    const auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ModelParams: missing parameter " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [n, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

struct RelEdges {
  std::vector<int> src, dst;
  bool empty() const { return src.empty(); }
  std::size_t size() const { return src.size(); }
};

/// Graph unpacked into tensors and index arrays for the forward pass.
struct GraphTensors {
  GraphMode mode = GraphMode::Hetero;
  std::string article_id;
  int label = 0;

  std::array<Tensor, 3> feats;  // hetero blocks; undefined when the type is empty
  std::array<bool, 3> has_type{};
  std::map<hetgraph::Relation, RelEdges> rel_edges;

  Tensor homo_feats;
  RelEdges homo_edges;

  int news_row = 0;  // within the news block (hetero) / global (homo)
  std::size_t total_nodes = 0;
};

inline GraphTensors prepare(const hetgraph::HeteroGraph& g) {
  GraphTensors out;
  out.mode = GraphMode::Hetero;
  out.article_id = g.article_id;
  out.label = g.label;
  out.news_row = g.news_index;
  for (hetgraph::NodeType t : hetgraph::kNodeTypes) {
    const auto& block = g.features_of(t);
    const int i = static_cast<int>(t);
    out.total_nodes += block.rows();
    if (block.rows() == 0) continue;
    out.has_type[i] = true;
    out.feats[i] = Tensor(block);
  }
  for (const auto& [r, block] : g.relations) {
    if (block.edges.empty()) continue;
    RelEdges e;
    e.src.reserve(block.edges.size());
    e.dst.reserve(block.edges.size());
    for (const auto& edge : block.edges) {
      e.src.push_back(edge.src);
      e.dst.push_back(edge.dst);
    }
    out.rel_edges.emplace(r, std::move(e));
  }
  return out;
}

inline GraphTensors prepare(const hetgraph::HomoGraph& g) {
  GraphTensors out;
  out.mode = GraphMode::Homo;
  out.article_id = g.article_id;
  out.label = g.label;
  out.news_row = g.news_index;
  out.total_nodes = g.features.rows();
  out.homo_feats = Tensor(g.features);
  for (const auto& e : g.edges) {
    out.homo_edges.src.push_back(e.src);
    out.homo_edges.dst.push_back(e.dst);
  }
  return out;
}

/// Per-neighborhood attention weights captured during a forward pass.
struct AttentionRecord {
  std::vector<double> weights;  // aligned with the edge list used
  std::vector<int> targets;     // segment id per weight
  std::size_t num_targets = 0;
};

struct LayerDiagnostics {
  std::map<std::string, AttentionRecord> attention;
};

namespace detail {

struct SchemaRel {
  std::string name;
  int src_type;
  int dst_type;
  const RelEdges* edges;  // may be null (relation absent in this graph)
};

struct Schema {
  std::vector<std::string> types;       // indexed by type id
  std::vector<std::size_t> counts;      // node count per type id
  std::vector<SchemaRel> rels;          // canonical relation universe
};

inline Schema schema_of(const GraphTensors& g) {
  Schema s;
  if (g.mode == GraphMode::Hetero) {
    for (hetgraph::NodeType t : hetgraph::kNodeTypes) {
      s.types.push_back(hetgraph::to_string(t));
      const int i = static_cast<int>(t);
      s.counts.push_back(g.has_type[i] ? g.feats[i].rows() : 0);
    }
    for (hetgraph::Relation r : hetgraph::kRelations) {
      const auto it = g.rel_edges.find(r);
      s.rels.push_back({hetgraph::to_string(r), static_cast<int>(hetgraph::source_type(r)),
                        static_cast<int>(hetgraph::target_type(r)),
                        it == g.rel_edges.end() ? nullptr : &it->second});
    }
  } else {
    s.types.push_back("node");
    s.counts.push_back(g.homo_feats.rows());
    s.rels.push_back({"edge", 0, 0, g.homo_edges.empty() ? nullptr : &g.homo_edges});
  }
  return s;
}

inline Tensor activate(Tape& tape, const Tensor& x, Activation a) {
  switch (a) {
    case Activation::Relu: return tape.relu(x);
    case Activation::Elu: return tape.elu(x);
  }
  throw std::logic_error("unknown activation");
}

}  // namespace detail

/// Glorot-uniform weights, zero biases; deterministic per seed.
inline ModelParams init_params(const ModelConfig& cfg, const DimInfo& dims,
                               std::uint64_t seed) {
  validate_config(cfg);
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](std::size_t rows, std::size_t cols) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = dist(rng);
    return Tensor(std::move(m), true);
  };
  auto zeros = [](std::size_t rows, std::size_t cols) { return Tensor::zeros(rows, cols, true); };

  const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t heads = static_cast<std::size_t>(cfg.heads);
  const bool hetero = cfg.mode == GraphMode::Hetero;

  std::vector<std::string> types;
  std::vector<std::string> rels;
  if (hetero) {
    for (hetgraph::NodeType t : hetgraph::kNodeTypes) types.push_back(hetgraph::to_string(t));
    for (hetgraph::Relation r : hetgraph::kRelations) rels.push_back(hetgraph::to_string(r));
  } else {
    types.push_back("node");
    rels.push_back("edge");
  }

  ModelParams p;
  if (hetero) {
    for (std::size_t t = 0; t < types.size(); ++t) {
      p.add("proj." + types[t] + ".w", glorot(dims.per_type[t], hidden));
      p.add("proj." + types[t] + ".b", zeros(1, hidden));
    }
  }

  for (int layer = 1; layer <= 2; ++layer) {
    const std::string lp = "l" + std::to_string(layer) + ".";
    const std::size_t in = (layer == 1) ? (hetero ? hidden : dims.homo) : hidden;
    switch (cfg.conv) {
      case ConvType::Sage:
        for (const auto& t : types) p.add(lp + "self." + t + ".w", glorot(in, hidden));
        for (const auto& r : rels) p.add(lp + "rel." + r + ".w", glorot(in, hidden));
        break;
      case ConvType::Gat: {
        // hidden layer: heads concatenated; final layer: heads averaged
        const std::size_t d = (layer == 1) ? hidden / heads : hidden;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::string hp = lp + "h" + std::to_string(h) + ".";
          for (const auto& r : rels) {
            p.add(hp + "rel." + r + ".w", glorot(in, d));
            p.add(hp + "rel." + r + ".asrc", glorot(d, 1));
            p.add(hp + "rel." + r + ".adst", glorot(d, 1));
          }
          for (const auto& t : types) {
            p.add(hp + "self." + t + ".w", glorot(in, d));
            p.add(hp + "self." + t + ".asrc", glorot(d, 1));
            p.add(hp + "self." + t + ".adst", glorot(d, 1));
          }
        }
        break;
      }
      case ConvType::Hgt: {
        const std::size_t d = hidden / heads;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::string hp = lp + "h" + std::to_string(h) + ".";
          for (const auto& t : types) {
            p.add(hp + "k." + t, glorot(in, d));
            p.add(hp + "q." + t, glorot(in, d));
            p.add(hp + "v." + t, glorot(in, d));
          }
          for (const auto& r : rels) {
            p.add(hp + "att." + r, glorot(d, d));
            p.add(hp + "msg." + r, glorot(d, d));
          }
        }
        for (const auto& t : types) p.add(lp + "out." + t, glorot(hidden, hidden));
        if (in != hidden)
          for (const auto& t : types) p.add(lp + "res." + t, glorot(in, hidden));
        break;
      }
    }
  }

  p.add("head.w", glorot(hidden, 2));
  p.add("head.b", zeros(1, 2));
  return p;
}

namespace detail {

inline std::vector<Tensor> sage_layer(Tape& tape, const Schema& schema,
                                      const std::vector<Tensor>& h, const ModelParams& params,
                                      const std::string& lp, const ModelConfig& cfg,
                                      bool final_layer) {
  std::vector<Tensor> out(h.size());
  for (std::size_t t = 0; t < schema.types.size(); ++t) {
    if (schema.counts[t] == 0) continue;
    Tensor acc = tape.matmul(h[t], params.at(lp + "self." + schema.types[t] + ".w"));
    for (const auto& rel : schema.rels) {
      if (!rel.edges || rel.dst_type != static_cast<int>(t)) continue;
      if (schema.counts[rel.src_type] == 0) continue;
      const Tensor gathered = tape.gather_rows(h[rel.src_type], rel.edges->src);
      const Tensor mean = tape.segment_mean(gathered, rel.edges->dst, schema.counts[t]);
      acc = tape.add(acc, tape.matmul(mean, params.at(lp + "rel." + rel.name + ".w")));
    }
    out[t] = final_layer ? acc : activate(tape, acc, cfg.activation);
  }
  return out;
}

inline std::vector<Tensor> gat_layer(Tape& tape, const Schema& schema,
                                     const std::vector<Tensor>& h, const ModelParams& params,
                                     const std::string& lp, const ModelConfig& cfg,
                                     bool final_layer, LayerDiagnostics* diag) {
  const std::size_t heads = static_cast<std::size_t>(cfg.heads);
  std::vector<Tensor> out(h.size());

  // relation universe: canonical relations plus one self relation per type,
  // the latter carrying identity edges so every node attends to itself
  struct GatRel {
    std::string key;  // parameter key fragment, e.g. "rel.cites" or "self.tweet"
    int src_type, dst_type;
    const RelEdges* edges;
    RelEdges self_storage;
  };
  std::vector<GatRel> rels;
  for (const auto& rel : schema.rels)
    rels.push_back({"rel." + rel.name, rel.src_type, rel.dst_type, rel.edges, {}});
  for (std::size_t t = 0; t < schema.types.size(); ++t) {
    if (schema.counts[t] == 0) continue;
    GatRel self{"self." + schema.types[t], static_cast<int>(t), static_cast<int>(t), nullptr, {}};
    for (std::size_t i = 0; i < schema.counts[t]; ++i) {
      self.self_storage.src.push_back(static_cast<int>(i));
      self.self_storage.dst.push_back(static_cast<int>(i));
    }
    rels.push_back(std::move(self));
  }
  // resolve self-edge pointers only once the vector stops relocating
  for (auto& rel : rels)
    if (!rel.edges && !rel.self_storage.src.empty()) rel.edges = &rel.self_storage;

  for (std::size_t t = 0; t < schema.types.size(); ++t) {
    if (schema.counts[t] == 0) continue;
    std::vector<Tensor> head_outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::string hp = lp + "h" + std::to_string(hd) + ".";
      Tensor acc;
      for (const auto& rel : rels) {
        if (!rel.edges || rel.edges->empty() || rel.dst_type != static_cast<int>(t)) continue;
        if (schema.counts[rel.src_type] == 0) continue;
        const Tensor w = params.at(hp + rel.key + ".w");
        const Tensor z_src = tape.matmul(h[rel.src_type], w);
        const Tensor z_dst =
            rel.src_type == rel.dst_type ? z_src : tape.matmul(h[rel.dst_type], w);
        const Tensor s_src = tape.matmul(z_src, params.at(hp + rel.key + ".asrc"));
        const Tensor s_dst = tape.matmul(z_dst, params.at(hp + rel.key + ".adst"));
        const Tensor scores = tape.leaky_relu(
            tape.add(tape.gather_rows(s_src, rel.edges->src),
                     tape.gather_rows(s_dst, rel.edges->dst)),
            cfg.attention_leak);
        const Tensor attn = tape.segment_softmax(scores, rel.edges->dst, schema.counts[t]);
        if (diag) {
          AttentionRecord rec;
          rec.weights = attn.values();
          rec.targets = rel.edges->dst;
          rec.num_targets = schema.counts[t];
          diag->attention[hp + rel.key] = std::move(rec);
        }
        const Tensor msg = tape.segment_sum(
            tape.scale_rows(tape.gather_rows(z_src, rel.edges->src), attn), rel.edges->dst,
            schema.counts[t]);
        acc = acc.defined() ? tape.add(acc, msg) : msg;
      }
      head_outs.push_back(acc);  // defined: the self relation always contributes
    }
    Tensor combined = head_outs[0];
    if (heads > 1) {
      if (final_layer) {  // average
        for (std::size_t hd = 1; hd < heads; ++hd) combined = tape.add(combined, head_outs[hd]);
        combined = tape.scale(combined, 1.0 / static_cast<double>(heads));
      } else {  // concat
        for (std::size_t hd = 1; hd < heads; ++hd)
          combined = tape.concat_cols(combined, head_outs[hd]);
      }
    }
    out[t] = final_layer ? combined : activate(tape, combined, cfg.activation);
  }
  return out;
}

inline std::vector<Tensor> hgt_layer(Tape& tape, const Schema& schema,
                                     const std::vector<Tensor>& h, const ModelParams& params,
                                     const std::string& lp, const ModelConfig& cfg,
                                     bool final_layer, LayerDiagnostics* diag) {
  const std::size_t heads = static_cast<std::size_t>(cfg.heads);
  const std::size_t hidden = static_cast<std::size_t>(cfg.hidden_dim);
  const std::size_t d = hidden / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Tensor> out(h.size());

  // per-type K/Q/V per head, computed once
  std::vector<std::vector<Tensor>> K(heads, std::vector<Tensor>(h.size()));
  auto Q = K, V = K;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const std::string hp = lp + "h" + std::to_string(hd) + ".";
    for (std::size_t t = 0; t < schema.types.size(); ++t) {
      if (schema.counts[t] == 0) continue;
      K[hd][t] = tape.matmul(h[t], params.at(hp + "k." + schema.types[t]));
      Q[hd][t] = tape.matmul(h[t], params.at(hp + "q." + schema.types[t]));
      V[hd][t] = tape.matmul(h[t], params.at(hp + "v." + schema.types[t]));
    }
  }
  const Tensor ones_col(Matrix(d, 1, 1.0));

  for (std::size_t t = 0; t < schema.types.size(); ++t) {
    if (schema.counts[t] == 0) continue;

    Tensor residual = h[t];
    if (params.has(lp + "res." + schema.types[t]))
      residual = tape.matmul(h[t], params.at(lp + "res." + schema.types[t]));

    bool any_edges = false;
    for (const auto& rel : schema.rels)
      if (rel.edges && !rel.edges->empty() && rel.dst_type == static_cast<int>(t) &&
          schema.counts[rel.src_type] > 0)
        any_edges = true;
    if (!any_edges) {
      out[t] = residual;  // empty softmax: zero message, pure residual
      continue;
    }

    Tensor msg_concat;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::string hp = lp + "h" + std::to_string(hd) + ".";
      // joint softmax over all in-neighbors of each target across relations
      Tensor logits, messages;
      std::vector<int> dst_all;
      for (const auto& rel : schema.rels) {
        if (!rel.edges || rel.edges->empty() || rel.dst_type != static_cast<int>(t)) continue;
        if (schema.counts[rel.src_type] == 0) continue;
        const Tensor k_edge = tape.gather_rows(K[hd][rel.src_type], rel.edges->src);
        const Tensor q_att =
            tape.matmul(Q[hd][t], tape.transpose(params.at(hp + "att." + rel.name)));
        const Tensor q_edge = tape.gather_rows(q_att, rel.edges->dst);
        const Tensor score = tape.scale(
            tape.matmul(tape.mul(k_edge, q_edge), ones_col), inv_sqrt_d);
        const Tensor m_edge = tape.gather_rows(
            tape.matmul(V[hd][rel.src_type], params.at(hp + "msg." + rel.name)),
            rel.edges->src);
        logits = logits.defined() ? tape.concat_rows(logits, score) : score;
        messages = messages.defined() ? tape.concat_rows(messages, m_edge) : m_edge;
        dst_all.insert(dst_all.end(), rel.edges->dst.begin(), rel.edges->dst.end());
      }
      const Tensor attn = tape.segment_softmax(logits, dst_all, schema.counts[t]);
      if (diag) {
        AttentionRecord rec;
        rec.weights = attn.values();
        rec.targets = dst_all;
        rec.num_targets = schema.counts[t];
        diag->attention[hp + "joint." + schema.types[t]] = std::move(rec);
      }
      const Tensor msg =
          tape.segment_sum(tape.scale_rows(messages, attn), dst_all, schema.counts[t]);
      msg_concat = msg_concat.defined() ? tape.concat_cols(msg_concat, msg) : msg;
    }

    const Tensor projected = tape.matmul(msg_concat, params.at(lp + "out." + schema.types[t]));
    const Tensor combined = tape.add(projected, residual);
    out[t] = final_layer ? combined : activate(tape, combined, cfg.activation);
  }
  return out;
}

}  // namespace detail

/// One graph convolution layer of the configured type over per-type features.
inline std::vector<Tensor> run_layer(Tape& tape, const GraphTensors& g,
                                     const ModelParams& params, const ModelConfig& cfg,
                                     const std::vector<Tensor>& h,
                                     const std::string& layer_prefix, bool final_layer,
                                     LayerDiagnostics* diag = nullptr) {
  const detail::Schema schema = detail::schema_of(g);
  if (h.size() != schema.types.size())
    throw std::invalid_argument("run_layer: feature list does not match graph types");
  switch (cfg.conv) {
    case ConvType::Sage:
      return detail::sage_layer(tape, schema, h, params, layer_prefix, cfg, final_layer);
    case ConvType::Gat:
      return detail::gat_layer(tape, schema, h, params, layer_prefix, cfg, final_layer, diag);
    case ConvType::Hgt:
      return detail::hgt_layer(tape, schema, h, params, layer_prefix, cfg, final_layer, diag);
  }
  throw std::logic_error("unknown conv type");
}

/// Full model: input projections (hetero), two conv layers, readout, linear head.
inline Tensor forward(Tape& tape, const GraphTensors& g, const ModelParams& params,
                      const ModelConfig& cfg, LayerDiagnostics* diag = nullptr) {
  const detail::Schema schema = detail::schema_of(g);

  std::vector<Tensor> h(schema.types.size());
  if (cfg.mode == GraphMode::Hetero) {
    if (g.mode != GraphMode::Hetero)
      throw std::invalid_argument("forward: hetero model fed a homogeneous graph");
    for (std::size_t t = 0; t < schema.types.size(); ++t) {
      if (schema.counts[t] == 0) continue;
      h[t] = tape.add_row_broadcast(
          tape.matmul(g.feats[t], params.at("proj." + schema.types[t] + ".w")),
          params.at("proj." + schema.types[t] + ".b"));
    }
  } else {
    if (g.mode != GraphMode::Homo)
      throw std::invalid_argument("forward: homo model fed a heterogeneous graph");
    h[0] = g.homo_feats;
  }

  h = run_layer(tape, g, params, cfg, h, "l1.", /*final_layer=*/false, diag);
  h = run_layer(tape, g, params, cfg, h, "l2.", /*final_layer=*/true, diag);

  Tensor pooled;
  if (cfg.readout == Readout::NewsNode) {
    const int news_type = cfg.mode == GraphMode::Hetero ? 0 : 0;
    if (!h[news_type].defined()) throw std::logic_error("forward: news block missing");
    pooled = tape.gather_rows(h[news_type], {g.news_row});
  } else {
    Tensor total;
    for (std::size_t t = 0; t < h.size(); ++t) {
      if (!h[t].defined()) continue;
      const Tensor ones_row(Matrix(1, h[t].rows(), 1.0));
      const Tensor sum = tape.matmul(ones_row, h[t]);
      total = total.defined() ? tape.add(total, sum) : sum;
    }
    pooled = tape.scale(total, 1.0 / static_cast<double>(g.total_nodes));
  }

  return tape.add_row_broadcast(tape.matmul(pooled, params.at("head.w")), params.at("head.b"));
}

// ---- checkpoint io ----

inline const char* to_string(ConvType c) {
  switch (c) {
    case ConvType::Sage: return "sage";
    case ConvType::Gat: return "gat";
    case ConvType::Hgt: return "hgt";
  }
  throw std::logic_error("unknown conv");
}

inline ConvType conv_from_string(const std::string& s) {
  if (s == "sage") return ConvType::Sage;
  if (s == "gat") return ConvType::Gat;
  if (s == "hgt") return ConvType::Hgt;
  throw std::invalid_argument("unknown conv type: " + s);
}

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"conv", to_string(cfg.conv)},
          {"hidden_dim", cfg.hidden_dim},
          {"n_layers", cfg.n_layers},
          {"heads", cfg.heads},
          {"activation", cfg.activation == Activation::Elu ? "elu" : "relu"},
          {"readout", cfg.readout == Readout::NewsNode ? "news_node" : "mean_all"},
          {"mode", cfg.mode == GraphMode::Hetero ? "hetero" : "homo"},
          {"attention_leak", cfg.attention_leak}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.conv = conv_from_string(j.at("conv").get<std::string>());
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.n_layers = j.value("n_layers", 2);
  cfg.heads = j.value("heads", 1);
  cfg.activation = j.value("activation", "elu") == std::string("relu") ? Activation::Relu
                                                                       : Activation::Elu;
  cfg.readout = j.value("readout", "news_node") == std::string("mean_all") ? Readout::MeanAll
                                                                           : Readout::NewsNode;
  cfg.mode = j.value("mode", "hetero") == std::string("homo") ? GraphMode::Homo
                                                              : GraphMode::Hetero;
  cfg.attention_leak = j.value("attention_leak", 0.2);
  return cfg;
}

inline std::string config_hash(const ModelConfig& cfg) {
  const std::uint64_t h = ingest::detail::fnv1a64(config_to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Checkpoint {
  ModelConfig config;
  DimInfo dims;
  ModelParams params;
};

inline void save_checkpoint(const std::filesystem::path& file, const ModelConfig& cfg,
                            const DimInfo& dims, const ModelParams& params) {
  nlohmann::json pj = nlohmann::json::object();
  for (const auto& [name, t] : params.entries())
    pj[name] = {{"shape", {t.rows(), t.cols()}}, {"values", t.values()}};
  const nlohmann::json j{{"format_version", 1},
                         {"config", config_to_json(cfg)},
                         {"config_hash", config_hash(cfg)},
                         {"dims", {{"per_type", dims.per_type}, {"homo", dims.homo}}},
                         {"params", std::move(pj)}};
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
  out << j.dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read checkpoint " + file.string());
  nlohmann::json j;
  in >> j;
  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  if (j.contains("config_hash") &&
      j.at("config_hash").get<std::string>() != config_hash(ck.config))
    throw std::runtime_error("checkpoint config hash mismatch");
  ck.dims.per_type = j.at("dims").at("per_type").get<std::array<std::size_t, 3>>();
  ck.dims.homo = j.at("dims").at("homo").get<std::size_t>();

  // rebuild in init order so optimizer state stays aligned
  ModelParams tmpl = init_params(ck.config, ck.dims, 0);
  for (const auto& [name, t] : tmpl.entries()) {
    if (!j.at("params").contains(name))
      throw std::runtime_error("checkpoint missing parameter " + name);
    const auto& pj = j.at("params").at(name);
    const auto shape = pj.at("shape").get<std::array<std::size_t, 2>>();
    Matrix m(shape[0], shape[1]);
    m.data() = pj.at("values").get<std::vector<double>>();
    if (m.data().size() != shape[0] * shape[1])
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    ck.params.add(name, Tensor(std::move(m), true));
  }
  return ck;
}

}  // namespace hetsmcg::gnn
