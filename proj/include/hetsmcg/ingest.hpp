#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "hetsmcg/embedder.hpp"
#include "hetsmcg/hetgraph.hpp"
#include "json.hpp"

namespace hetsmcg::ingest {

using nlohmann::json;

struct NewsRecord {
  std::string article_id;
  int label = 0;  // 0 real, 1 fake
  std::string text;
  std::string dataset;  // politifact | gossipcop | synthetic tag
};

enum class TweetKind { Citing, Retweet, Timeline };

struct TweetRecord {
  std::string tweet_id;
  std::string text;
  double retweet_count = 0;
  double favorite_count = 0;
  std::string user_id;
  std::int64_t created_at = 0;
  TweetKind kind = TweetKind::Citing;
  std::string of_tweet_id;  // retweets only
};

struct UserRecord {
  std::string user_id;
  std::string description;
  double followers = 0;
  double friends = 0;
  double favorites = 0;
  double statuses = 0;
};

/// Every record belonging to one article.
struct ArticleData {
  NewsRecord news;
  bool news_available = false;
  std::vector<TweetRecord> citing;
  std::vector<TweetRecord> retweets;
  std::vector<UserRecord> users;
  std::map<std::string, std::vector<TweetRecord>> timelines;  // user_id -> tweets

  const UserRecord* find_user(const std::string& user_id) const {
    for (const auto& u : users)
      if (u.user_id == user_id) return &u;
    return nullptr;
  }
};

struct CorpusIndex {
  std::filesystem::path root;
  std::vector<std::string> article_ids;  // sorted
  std::map<std::string, ArticleData> articles;
  std::size_t warnings = 0;
};

namespace detail {

inline std::optional<json> read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
  return j;
}

inline bool parse_tweet(const json& j, TweetKind kind, TweetRecord& out) {
  if (!j.is_object() || !j.contains("tweet_id") || !j.contains("user_id")) return false;
  out.tweet_id = j.at("tweet_id").is_string() ? j.at("tweet_id").get<std::string>()
                                              : std::to_string(j.at("tweet_id").get<long long>());
  out.user_id = j.at("user_id").is_string() ? j.at("user_id").get<std::string>()
                                            : std::to_string(j.at("user_id").get<long long>());
  out.text = j.value("text", std::string{});
  out.retweet_count = j.value("retweet_count", 0.0);
  out.favorite_count = j.value("favorite_count", 0.0);
  out.created_at = j.value("created_at", std::int64_t{0});
  out.kind = kind;
  if (kind == TweetKind::Retweet) {
    if (!j.contains("of_tweet_id")) return false;
    out.of_tweet_id = j.at("of_tweet_id").is_string()
                          ? j.at("of_tweet_id").get<std::string>()
                          : std::to_string(j.at("of_tweet_id").get<long long>());
  }
  if (out.tweet_id.empty() || out.retweet_count < 0 || out.favorite_count < 0) return false;
  return true;
}

inline bool parse_user(const json& j, UserRecord& out) {
  if (!j.is_object() || !j.contains("user_id")) return false;
  out.user_id = j.at("user_id").is_string() ? j.at("user_id").get<std::string>()
                                            : std::to_string(j.at("user_id").get<long long>());
  out.description = j.value("description", std::string{});
  out.followers = j.value("followers", 0.0);
  out.friends = j.value("friends", 0.0);
  out.favorites = j.value("favorites", 0.0);
  out.statuses = j.value("statuses", 0.0);
  if (out.user_id.empty() || out.followers < 0 || out.friends < 0 || out.favorites < 0 ||
      out.statuses < 0)
    return false;
  return true;
}

}  // namespace detail

/// Loads a FakeNewsNet-shaped corpus directory. Malformed individual records
/// are skipped and counted as warnings; a missing root or manifest is fatal.
inline CorpusIndex load_corpus(const std::filesystem::path& root) {
  CorpusIndex corpus;
  corpus.root = root;
  const auto manifest = detail::read_json_file(root / "manifest.json");
  if (!manifest) throw std::runtime_error("load_corpus: missing manifest.json in " + root.string());

  for (const auto& a : manifest->at("articles")) {
    const std::string id = a.at("id").get<std::string>();
    ArticleData data;
    data.news.article_id = id;
    data.news.label = a.at("label").get<int>();
    data.news.dataset = a.value("dataset", std::string{});

    if (auto nj = detail::read_json_file(root / "news" / (id + ".json")); nj && nj->is_object()) {
      data.news.text = nj->value("title", std::string{});
      const std::string body = nj->value("text", std::string{});
      if (!data.news.text.empty() && !body.empty()) data.news.text += " ";
      data.news.text += body;
      data.news_available = true;
    }

    std::set<std::string> seen_tweets;
    auto add_tweets = [&](const json& arr, TweetKind kind, std::vector<TweetRecord>& dst) {
      if (!arr.is_array()) {
        ++corpus.warnings;
        return;
      }
      for (const auto& tj : arr) {
        TweetRecord t;
        if (!detail::parse_tweet(tj, kind, t)) {
          ++corpus.warnings;
          continue;
        }
        if (!seen_tweets.insert(t.tweet_id).second) {
          ++corpus.warnings;  // duplicate tweet_id: first occurrence wins
          continue;
        }
        dst.push_back(std::move(t));
      }
    };

    if (auto tj = detail::read_json_file(root / "tweets" / (id + ".json")))
      add_tweets(*tj, TweetKind::Citing, data.citing);
    if (auto rj = detail::read_json_file(root / "retweets" / (id + ".json"))) {
      std::vector<TweetRecord> parsed;
      add_tweets(*rj, TweetKind::Retweet, parsed);
      std::set<std::string> citing_ids;
      for (const auto& t : data.citing) citing_ids.insert(t.tweet_id);
      for (auto& r : parsed) {
        if (!citing_ids.count(r.of_tweet_id)) {
          ++corpus.warnings;  // dangling retweet reference
          continue;
        }
        data.retweets.push_back(std::move(r));
      }
    }
    if (auto uj = detail::read_json_file(root / "users" / (id + ".json"))) {
      if (uj->is_array()) {
        std::set<std::string> seen_users;
        for (const auto& u : *uj) {
          UserRecord rec;
          if (!detail::parse_user(u, rec) || !seen_users.insert(rec.user_id).second) {
            ++corpus.warnings;
            continue;
          }
          data.users.push_back(std::move(rec));
        }
      } else {
        ++corpus.warnings;
      }
    }
    if (auto lj = detail::read_json_file(root / "timelines" / (id + ".json"))) {
      if (lj->is_object()) {
        for (const auto& [user_id, arr] : lj->items())
          add_tweets(arr, TweetKind::Timeline, data.timelines[user_id]);
      } else {
        ++corpus.warnings;
      }
    }

    corpus.article_ids.push_back(id);
    corpus.articles.emplace(id, std::move(data));
  }
  std::sort(corpus.article_ids.begin(), corpus.article_ids.end());
  return corpus;
}

/// The five incremental social-context inclusion levels.
enum class Setup { S1_Tweets = 1, S2_PlusUsers = 2, S3_PlusTimeline = 3, S4_PlusRetweets = 4, S5_All = 5 };

inline constexpr std::array<Setup, 5> kSetups{Setup::S1_Tweets, Setup::S2_PlusUsers,
                                              Setup::S3_PlusTimeline, Setup::S4_PlusRetweets,
                                              Setup::S5_All};

inline bool includes_users(Setup s) { return s != Setup::S1_Tweets; }
inline bool includes_timeline(Setup s) { return s == Setup::S3_PlusTimeline || s == Setup::S5_All; }
inline bool includes_retweets(Setup s) { return s == Setup::S4_PlusRetweets || s == Setup::S5_All; }

inline int setup_number(Setup s) { return static_cast<int>(s); }

inline Setup setup_from_number(int n) {
  if (n < 1 || n > 5) throw std::invalid_argument("setup must be in 1..5");
  return static_cast<Setup>(n);
}

enum class FeatureMode { TextOnly, TextPlusSocial };

struct BuildOptions {
  bool log1p_counts = true;       // scale raw social counts with log1p
  std::size_t timeline_cap = 5;   // "latest" timeline tweets per user
  std::size_t min_per_type = 5;   // size filter threshold
};

/// Size filter: >= 5 tweet nodes always, and >= 5 user nodes whenever the
/// setup includes users. The singleton news type is exempt.
inline bool min_size_filter(const hetgraph::HeteroGraph& g, Setup setup,
                            std::size_t min_per_type = 5) {
  if (g.node_count(hetgraph::NodeType::Tweet) < min_per_type) return false;
  if (includes_users(setup) && g.node_count(hetgraph::NodeType::User) < min_per_type)
    return false;
  return true;
}

struct BuildOutcome {
  std::optional<hetgraph::HeteroGraph> graph;
  std::string skip_reason;  // set when graph is empty
};

namespace detail {

inline std::vector<const TweetRecord*> latest_timeline(const ArticleData& art,
                                                       const std::string& user_id,
                                                       std::size_t cap) {
  std::vector<const TweetRecord*> out;
  const auto it = art.timelines.find(user_id);
  if (it == art.timelines.end()) return out;
  for (const auto& t : it->second) out.push_back(&t);
  std::sort(out.begin(), out.end(), [](const TweetRecord* a, const TweetRecord* b) {
    if (a->created_at != b->created_at) return a->created_at > b->created_at;
    return a->tweet_id > b->tweet_id;  // ids are time-ordered on the platform
  });
  if (out.size() > cap) out.resize(cap);
  return out;
}

/// Node counts a setup-5 graph would have, without building features.
inline void s5_node_counts(const ArticleData& art, const BuildOptions& opt,
                           std::size_t& n_tweets, std::size_t& n_users) {
  std::set<std::string> users;
  for (const auto& t : art.citing) users.insert(t.user_id);
  // each distinct citing author contributes capped timeline tweets once
  std::size_t timeline = 0;
  std::set<std::string> counted;
  for (const auto& t : art.citing)
    if (counted.insert(t.user_id).second)
      timeline += latest_timeline(art, t.user_id, opt.timeline_cap).size();
  for (const auto& r : art.retweets) users.insert(r.user_id);
  n_tweets = art.citing.size() + timeline + art.retweets.size();
  n_users = users.size();
}

}  // namespace detail

/// Builds the per-article heterogeneous graph for a setup. The graph is
/// validated and made undirected before it is returned.
inline BuildOutcome build_graph(const CorpusIndex& corpus, const std::string& article_id,
                                Setup setup, FeatureMode features, TextEmbedder& embedder,
                                const BuildOptions& opt = {}, bool apply_min_size = true) {
  using hetgraph::HeteroGraph;
  using hetgraph::NodeType;
  using hetgraph::Relation;
  using numkit::Matrix;

  const auto it = corpus.articles.find(article_id);
  if (it == corpus.articles.end() || !it->second.news_available)
    return {std::nullopt, "news missing"};
  const ArticleData& art = it->second;

  const std::size_t d_text = embedder.dim();
  const bool social = features == FeatureMode::TextPlusSocial;
  auto scale = [&](double v) { return opt.log1p_counts ? std::log1p(v) : v; };

  struct TweetNode {
    const TweetRecord* rec;
  };
  std::vector<TweetNode> tweets;
  std::map<std::string, int> tweet_index;
  auto add_tweet = [&](const TweetRecord& t) {
    tweet_index.emplace(t.tweet_id, static_cast<int>(tweets.size()));
    tweets.push_back({&t});
  };

  std::vector<const UserRecord*> users;  // nullptr when the author has no profile record
  std::vector<std::string> user_order;
  std::map<std::string, int> user_index;
  auto add_user = [&](const std::string& user_id) {
    if (auto uit = user_index.find(user_id); uit != user_index.end()) return uit->second;
    const int idx = static_cast<int>(users.size());
    user_index.emplace(user_id, idx);
    user_order.push_back(user_id);
    users.push_back(art.find_user(user_id));
    return idx;
  };

  HeteroGraph g;
  g.article_id = article_id;
  g.label = art.news.label;

  for (const auto& t : art.citing) add_tweet(t);

  std::vector<std::pair<int, int>> posts_edges;  // user -> tweet
  if (includes_users(setup))
    for (const auto& t : art.citing) posts_edges.emplace_back(add_user(t.user_id), tweet_index.at(t.tweet_id));

  if (includes_timeline(setup)) {
    const std::vector<std::string> citing_users = user_order;
    for (const auto& uid : citing_users)
      for (const TweetRecord* t : detail::latest_timeline(art, uid, opt.timeline_cap)) {
        if (tweet_index.count(t->tweet_id)) continue;
        add_tweet(*t);
        posts_edges.emplace_back(user_index.at(uid), tweet_index.at(t->tweet_id));
      }
  }

  std::vector<std::pair<int, int>> retweet_edges;  // retweet -> cited tweet
  if (includes_retweets(setup))
    for (const auto& r : art.retweets) {
      if (tweet_index.count(r.tweet_id)) continue;
      add_tweet(r);
      retweet_edges.emplace_back(tweet_index.at(r.tweet_id), tweet_index.at(r.of_tweet_id));
      posts_edges.emplace_back(add_user(r.user_id), tweet_index.at(r.tweet_id));
    }

  // features
  Matrix news(1, d_text);
  {
    const auto v = embedder.embed(art.news.text);
    for (std::size_t j = 0; j < d_text; ++j) news.at(0, j) = v[j];
  }
  g.features_of(NodeType::News) = std::move(news);

  const std::size_t tweet_dim = d_text + (social ? 2 : 0);
  Matrix tweet_feats(tweets.size(), tweet_dim);
  for (std::size_t i = 0; i < tweets.size(); ++i) {
    const auto v = embedder.embed(tweets[i].rec->text);
    for (std::size_t j = 0; j < d_text; ++j) tweet_feats.at(i, j) = v[j];
    if (social) {
      tweet_feats.at(i, d_text) = scale(tweets[i].rec->retweet_count);
      tweet_feats.at(i, d_text + 1) = scale(tweets[i].rec->favorite_count);
    }
  }
  g.features_of(NodeType::Tweet) = std::move(tweet_feats);

  if (includes_users(setup)) {
    const std::size_t user_dim = d_text + (social ? 4 : 0);
    Matrix user_feats(users.size(), user_dim);
    for (std::size_t i = 0; i < users.size(); ++i) {
      const UserRecord empty{user_order[i], "", 0, 0, 0, 0};
      const UserRecord* rec = users[i] ? users[i] : &empty;
      const auto v = embedder.embed(rec->description);
      for (std::size_t j = 0; j < d_text; ++j) user_feats.at(i, j) = v[j];
      if (social) {
        user_feats.at(i, d_text) = scale(rec->followers);
        user_feats.at(i, d_text + 1) = scale(rec->friends);
        user_feats.at(i, d_text + 2) = scale(rec->favorites);
        user_feats.at(i, d_text + 3) = scale(rec->statuses);
      }
    }
    g.features_of(NodeType::User) = std::move(user_feats);
  }

  // edges
  for (std::size_t i = 0; i < art.citing.size(); ++i)
    g.add_edge(Relation::Cites, static_cast<int>(i), 0);
  for (const auto& [u, t] : posts_edges) g.add_edge(Relation::Posts, u, t);
  for (const auto& [rt, orig] : retweet_edges) g.add_edge(Relation::Retweets, rt, orig);

  g.node_ids[static_cast<int>(NodeType::News)] = {article_id};
  for (const auto& t : tweets)
    g.node_ids[static_cast<int>(NodeType::Tweet)].push_back(t.rec->tweet_id);
  g.node_ids[static_cast<int>(NodeType::User)] = user_order;

  if (apply_min_size && !min_size_filter(g, setup, opt.min_per_type))
    return {std::nullopt, "too small"};

  const auto violations = hetgraph::validate(g);
  if (!violations.empty())
    throw std::logic_error("build_graph: constructed invalid graph: " + violations.front());

  return {hetgraph::make_undirected(g), ""};
}

struct DatasetBuildReport {
  struct Skip {
    std::string article_id;
    std::string reason;
  };
  std::vector<hetgraph::HeteroGraph> graphs;  // ordered by article_id
  std::vector<Skip> skipped;
};

/// Builds the dataset for one setup. The kept-article set is decided once by
/// the setup-5 size filter (plus news availability) and reused for every
/// setup, so all setups see identical article sets.
inline DatasetBuildReport build_dataset(const CorpusIndex& corpus, Setup setup,
                                        FeatureMode features, TextEmbedder& embedder,
                                        const BuildOptions& opt = {}) {
  DatasetBuildReport report;
  for (const auto& id : corpus.article_ids) {
    const ArticleData& art = corpus.articles.at(id);
    if (!art.news_available) {
      report.skipped.push_back({id, "news missing"});
      continue;
    }
    std::size_t n_tweets = 0, n_users = 0;
    detail::s5_node_counts(art, opt, n_tweets, n_users);
    if (n_tweets < opt.min_per_type || n_users < opt.min_per_type) {
      report.skipped.push_back({id, "too small"});
      continue;
    }
    auto outcome = build_graph(corpus, id, setup, features, embedder, opt,
                               /*apply_min_size=*/false);
    if (!outcome.graph) {
      report.skipped.push_back({id, outcome.skip_reason});
      continue;
    }
    report.graphs.push_back(std::move(*outcome.graph));
  }
  if (report.graphs.empty())
    throw std::runtime_error("build_dataset: no graphs passed the filters");
  return report;
}

}  // namespace hetsmcg::ingest
