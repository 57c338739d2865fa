#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsmcg/hetgraph.hpp"
#include "json.hpp"

namespace hetsmcg::hetgraph {

using nlohmann::json;

/// One JSON document per graph:
/// {article_id, label, nodes: {news|tweet|user: [[floats]]}, edges: {relation: [[src,tgt]]}}
inline json graph_to_json(const HeteroGraph& g) {
  json nodes = json::object();
  for (NodeType t : kNodeTypes) {
    const auto& block = g.features_of(t);
    json rows = json::array();
    for (std::size_t i = 0; i < block.rows(); ++i) {
      json row = json::array();
      for (std::size_t j = 0; j < block.cols(); ++j) row.push_back(block.at(i, j));
      rows.push_back(std::move(row));
    }
    nodes[to_string(t)] = std::move(rows);
  }
  json edges = json::object();
  for (const auto& [r, block] : g.relations) {
    if (block.edges.empty()) continue;
    json pairs = json::array();
    for (const Edge& e : block.edges) pairs.push_back(json::array({e.src, e.dst}));
    edges[to_string(r)] = std::move(pairs);
  }
  return json{{"article_id", g.article_id},
              {"label", g.label},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)}};
}

inline HeteroGraph graph_from_json(const json& j) {
  HeteroGraph g;
  g.article_id = j.at("article_id").get<std::string>();
  g.label = j.at("label").get<int>();
  for (NodeType t : kNodeTypes) {
    const json& rows = j.at("nodes").at(to_string(t));
    if (rows.empty()) continue;
    numkit::Matrix block(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != block.cols())
        throw std::invalid_argument("graph_from_json: ragged feature rows");
      for (std::size_t jj = 0; jj < block.cols(); ++jj) block.at(i, jj) = rows[i][jj].get<double>();
    }
    g.features_of(t) = std::move(block);
  }
  for (const auto& [name, pairs] : j.at("edges").items()) {
    const Relation r = relation_from_string(name);
    for (const auto& p : pairs) g.add_edge(r, p.at(0).get<int>(), p.at(1).get<int>());
  }
  return g;
}

inline void save_graph(const std::filesystem::path& file, const HeteroGraph& g) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << graph_to_json(g).dump(1) << "\n";
}

inline HeteroGraph load_graph(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  json j;
  in >> j;
  return graph_from_json(j);
}

struct ManifestEntry {
  std::string id;
  int label = 0;
  std::string file;
  int fold = -1;
};

/// Directory manifest: graph ids, labels, files and the shared fold assignment.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int num_folds = 0;
  std::uint64_t fold_seed = 0;
};

inline void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back(
        json{{"id", e.id}, {"label", e.label}, {"file", e.file}, {"fold", e.fold}});
  const json j{{"graphs", std::move(entries)},
               {"num_folds", m.num_folds},
               {"fold_seed", m.fold_seed}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << j.dump(1) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing manifest.json in " + dir.string());
  json j;
  in >> j;
  DatasetManifest m;
  m.num_folds = j.value("num_folds", 0);
  m.fold_seed = j.value("fold_seed", std::uint64_t{0});
  for (const auto& e : j.at("graphs"))
    m.entries.push_back({e.at("id").get<std::string>(), e.at("label").get<int>(),
                         e.at("file").get<std::string>(), e.value("fold", -1)});
  return m;
}

inline void save_dataset(const std::filesystem::path& dir,
                         const std::vector<HeteroGraph>& graphs, DatasetManifest manifest) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < graphs.size(); ++i)
    save_graph(dir / manifest.entries.at(i).file, graphs[i]);
  save_manifest(dir, manifest);
}

inline std::vector<HeteroGraph> load_dataset(const std::filesystem::path& dir,
                                             const DatasetManifest& manifest) {
  std::vector<HeteroGraph> graphs;
  graphs.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) graphs.push_back(load_graph(dir / e.file));
  return graphs;
}

}  // namespace hetsmcg::hetgraph
