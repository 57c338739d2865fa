#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "hetsmcg/matrix.hpp"

namespace hetsmcg::hetgraph {

enum class NodeType { News = 0, Tweet = 1, User = 2 };

inline constexpr std::array<NodeType, 3> kNodeTypes{NodeType::News, NodeType::Tweet,
                                                    NodeType::User};

inline const char* to_string(NodeType t) {
  switch (t) {
    case NodeType::News: return "news";
    case NodeType::Tweet: return "tweet";
    case NodeType::User: return "user";
  }
  throw std::logic_error("unknown node type");
}

/// Forward relations come from the corpus; reversed variants exist only
/// after make_undirected.
enum class Relation {
  Cites = 0,      // tweet -> news
  Posts = 1,      // user -> tweet
  Retweets = 2,   // tweet -> tweet
  RevCites = 3,   // news -> tweet
  RevPosts = 4,   // tweet -> user
  RevRetweets = 5
};

inline constexpr std::array<Relation, 6> kRelations{
    Relation::Cites,    Relation::Posts,    Relation::Retweets,
    Relation::RevCites, Relation::RevPosts, Relation::RevRetweets};

inline constexpr std::array<Relation, 3> kForwardRelations{Relation::Cites, Relation::Posts,
                                                           Relation::Retweets};

inline bool is_reversed(Relation r) { return static_cast<int>(r) >= 3; }

inline Relation reversed(Relation r) {
  return static_cast<Relation>((static_cast<int>(r) + 3) % 6);
}

inline NodeType source_type(Relation r) {
  switch (r) {
    case Relation::Cites: return NodeType::Tweet;
    case Relation::Posts: return NodeType::User;
    case Relation::Retweets: return NodeType::Tweet;
    case Relation::RevCites: return NodeType::News;
    case Relation::RevPosts: return NodeType::Tweet;
    case Relation::RevRetweets: return NodeType::Tweet;
  }
  throw std::logic_error("unknown relation");
}

inline NodeType target_type(Relation r) { return source_type(reversed(r)); }

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::Cites: return "cites";
    case Relation::Posts: return "posts";
    case Relation::Retweets: return "retweets";
    case Relation::RevCites: return "rev_cites";
    case Relation::RevPosts: return "rev_posts";
    case Relation::RevRetweets: return "rev_retweets";
  }
  throw std::logic_error("unknown relation");
}

inline Relation relation_from_string(const std::string& s) {
  for (Relation r : kRelations)
    if (s == to_string(r)) return r;
  throw std::invalid_argument("unknown relation name: " + s);
}

struct Edge {
  int src = 0;
  int dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Edge list of one relation. Endpoint types are stored explicitly so that
/// validate() can flag blocks whose types do not match the relation signature.
struct RelationBlock {
  NodeType src_type = NodeType::News;
  NodeType dst_type = NodeType::News;
  std::vector<Edge> edges;
};

/// One per-article snapshot: typed node feature blocks, typed edge lists,
/// binary label. The single news node sits at row 0 of the news block.
struct HeteroGraph {
  std::string article_id;
  int label = 0;  // 0 = real, 1 = fake
  std::array<numkit::Matrix, 3> features;
  std::map<Relation, RelationBlock> relations;
  int news_index = 0;
  // source record ids per node row, parallel to the feature blocks; carried
  // for bookkeeping and tests, not serialized
  std::array<std::vector<std::string>, 3> node_ids;

  numkit::Matrix& features_of(NodeType t) { return features[static_cast<int>(t)]; }
  const numkit::Matrix& features_of(NodeType t) const {
    return features[static_cast<int>(t)];
  }
  std::size_t node_count(NodeType t) const { return features_of(t).rows(); }

  void add_edge(Relation r, int src, int dst) {
    auto& block = relations[r];
    block.src_type = source_type(r);
    block.dst_type = target_type(r);
    block.edges.push_back({src, dst});
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& [r, block] : relations) n += block.edges.size();
    return n;
  }
};

struct HomoGraph {
  std::string article_id;
  int label = 0;
  numkit::Matrix features;
  std::vector<Edge> edges;
  int news_index = 0;                          // global row of the news node
  std::array<std::size_t, 3> type_offsets{};   // block start per node type
};

/// Returns every invariant violation found; an empty list means valid.
inline std::vector<std::string> validate(const HeteroGraph& g) {
  std::vector<std::string> violations;

  if (g.node_count(NodeType::News) != 1)
    violations.push_back("|V_N| != 1 (got " + std::to_string(g.node_count(NodeType::News)) +
                         " news nodes)");
  if (g.news_index != 0) violations.push_back("news node index must be 0");

  const std::size_t d_text = g.features_of(NodeType::News).cols();
  const auto& tweets = g.features_of(NodeType::Tweet);
  const auto& users = g.features_of(NodeType::User);
  bool tweet_social = false, user_social = false;
  if (tweets.rows() > 0) {
    if (tweets.cols() != d_text && tweets.cols() != d_text + 2)
      violations.push_back("tweet feature dim must be D_text or D_text+2");
    tweet_social = tweets.cols() == d_text + 2;
  }
  if (users.rows() > 0) {
    if (users.cols() != d_text && users.cols() != d_text + 4)
      violations.push_back("user feature dim must be D_text or D_text+4");
    user_social = users.cols() == d_text + 4;
  }
  if (tweets.rows() > 0 && users.rows() > 0 && tweet_social != user_social)
    violations.push_back("mixed text-only and social feature dims");

  std::set<std::tuple<Relation, int, int>> seen;
  for (const auto& [r, block] : g.relations) {
    if (block.src_type != source_type(r) || block.dst_type != target_type(r)) {
      violations.push_back(std::string("relation signature violated for ") + to_string(r));
      continue;
    }
    const std::size_t n_src = g.node_count(block.src_type);
    const std::size_t n_dst = g.node_count(block.dst_type);
    for (const Edge& e : block.edges) {
      if (e.src < 0 || static_cast<std::size_t>(e.src) >= n_src ||
          e.dst < 0 || static_cast<std::size_t>(e.dst) >= n_dst) {
        violations.push_back(std::string("edge index out of range in ") + to_string(r));
        break;
      }
    }
    for (const Edge& e : block.edges)
      if (!seen.insert({r, e.src, e.dst}).second) {
        violations.push_back(std::string("duplicate edge in ") + to_string(r));
        break;
      }
  }
  return violations;
}

/// Adds a reversed edge (v, rev_r, u) for every forward edge (u, r, v).
/// Exactly doubles the edge count. Applying it to a graph that already
/// carries reversed relations is a contract error.
inline HeteroGraph make_undirected(const HeteroGraph& g) {
  for (const auto& [r, block] : g.relations)
    if (is_reversed(r) && !block.edges.empty())
      throw std::logic_error("make_undirected: input already has reversed edges");
  HeteroGraph out = g;
  for (Relation r : kForwardRelations) {
    auto it = g.relations.find(r);
    if (it == g.relations.end()) continue;
    for (const Edge& e : it->second.edges) out.add_edge(reversed(r), e.dst, e.src);
  }
  return out;
}

enum class FlattenMode { Truncate, Pad };

/// Concatenates node blocks in order news, tweet, user and merges all edges
/// into one list with block-offset-remapped indices. Truncate keeps the
/// first D_text columns of every row; pad appends zeros up to D_text+4.
inline HomoGraph flatten(const HeteroGraph& g, FlattenMode mode) {
  HomoGraph out;
  out.article_id = g.article_id;
  out.label = g.label;

  const std::size_t d_text = g.features_of(NodeType::News).cols();
  const std::size_t out_dim = mode == FlattenMode::Truncate ? d_text : d_text + 4;

  std::size_t total = 0;
  for (NodeType t : kNodeTypes) {
    out.type_offsets[static_cast<int>(t)] = total;
    total += g.node_count(t);
  }
  out.features = numkit::Matrix(total, out_dim);
  std::size_t row = 0;
  for (NodeType t : kNodeTypes) {
    const auto& block = g.features_of(t);
    for (std::size_t i = 0; i < block.rows(); ++i, ++row) {
      const std::size_t keep = std::min(out_dim, block.cols());
      for (std::size_t j = 0; j < keep; ++j) out.features.at(row, j) = block.at(i, j);
    }
  }
  for (const auto& [r, block] : g.relations) {
    const std::size_t src_off = out.type_offsets[static_cast<int>(block.src_type)];
    const std::size_t dst_off = out.type_offsets[static_cast<int>(block.dst_type)];
    for (const Edge& e : block.edges)
      out.edges.push_back({static_cast<int>(src_off) + e.src, static_cast<int>(dst_off) + e.dst});
  }
  out.news_index = static_cast<int>(out.type_offsets[static_cast<int>(NodeType::News)]) +
                   g.news_index;
  return out;
}

struct DegreeStats {
  std::array<std::size_t, 3> node_counts{};
  std::map<Relation, std::size_t> edge_counts;
};

inline DegreeStats degree_stats(const HeteroGraph& g) {
  DegreeStats s;
  for (NodeType t : kNodeTypes) s.node_counts[static_cast<int>(t)] = g.node_count(t);
  for (const auto& [r, block] : g.relations)
    if (!block.edges.empty()) s.edge_counts[r] = block.edges.size();
  return s;
}

}  // namespace hetsmcg::hetgraph
