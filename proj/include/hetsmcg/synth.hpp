#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hetsmcg::synth {

using nlohmann::json;

/// Knobs for the synthetic corpus. Fake articles draw their spreading
/// statistics (retweet counts, retweet nodes) from shifted distributions and
/// oversample a topic word set with bias beta; real articles sample the
/// shared vocabulary uniformly.
struct SynthConfig {
  std::size_t n_articles = 200;
  double fake_fraction = 0.5;
  std::uint64_t seed = 0;

  // citing tweets per article: Poisson, clamped from below so the default
  // corpus clears the five-per-type size filter
  double citing_rate_real = 8.0;
  double citing_rate_fake = 8.0;
  std::size_t min_citing = 5;

  // retweet records per citing tweet: Poisson
  double retweet_node_rate_real = 1.5;
  double retweet_node_rate_fake = 3.0;

  // retweet/favorite count features: negative binomial via gamma-Poisson
  double retweet_count_mean_real = 2.0;
  double retweet_count_mean_fake = 4.0;
  double retweet_count_dispersion = 2.0;
  double favorite_count_mean = 3.0;
  double favorite_count_dispersion = 2.0;

  // user profile counts: log-normal
  double follower_log_mean = 4.0, follower_log_sd = 1.2;
  double friends_log_mean = 3.5, friends_log_sd = 1.0;
  double favorites_log_mean = 3.0, favorites_log_sd = 1.0;
  double statuses_log_mean = 5.0, statuses_log_sd = 1.0;

  // bag-of-words text
  std::size_t vocab_size = 500;
  std::size_t topic_words = 40;
  double beta = 0.6;
  std::size_t news_words = 80;
  std::size_t tweet_words = 12;
  std::size_t profile_words = 8;

  // timeline posts per user: Poisson (builders cap at five)
  double timeline_rate = 5.0;

  std::size_t suggested_dtext = 64;

  /// Label-independent variant: no topic bias, no count shifts.
  static SynthConfig null_signal(std::uint64_t seed = 0) {
    SynthConfig c;
    c.seed = seed;
    c.beta = 0.0;
    c.retweet_node_rate_fake = c.retweet_node_rate_real;
    c.retweet_count_mean_fake = c.retweet_count_mean_real;
    c.citing_rate_fake = c.citing_rate_real;
    return c;
  }
};

/// Exact per-article generator counts, written next to the corpus so tests
/// can check builder output against the generator's own bookkeeping.
struct ArticleBook {
  std::string id;
  int label = 0;
  std::size_t n_citing = 0;
  std::size_t n_retweets = 0;
  std::size_t n_users_citing = 0;
  std::size_t n_users_all = 0;
  std::size_t timeline_total = 0;         // raw generated timeline posts
  std::size_t timeline_total_capped = 0;  // with the builder's cap of five
  double sum_retweet_count = 0.0;         // over citing tweets
};

struct Bookkeeping {
  SynthConfig config;
  std::vector<ArticleBook> articles;
};

namespace detail {

class WordSampler {
 public:
  WordSampler(const SynthConfig& cfg) : cfg_(cfg) {
    words_.reserve(cfg.vocab_size);
    for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "w%04zu", i);
      words_.emplace_back(buf);
    }
  }

  std::string text(std::mt19937_64& rng, std::size_t n_words, int label) const {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any(0, cfg_.vocab_size - 1);
    std::uniform_int_distribution<std::size_t> topic(cfg_.vocab_size - cfg_.topic_words,
                                                     cfg_.vocab_size - 1);
    std::string out;
    for (std::size_t i = 0; i < n_words; ++i) {
      const std::size_t w =
          (label == 1 && coin(rng) < cfg_.beta) ? topic(rng) : any(rng);
      if (!out.empty()) out.push_back(' ');
      out += words_[w];
    }
    return out;
  }

 private:
  const SynthConfig& cfg_;
  std::vector<std::string> words_;
};

inline double neg_binomial(std::mt19937_64& rng, double mean, double dispersion) {
  std::gamma_distribution<double> gamma(dispersion, mean / dispersion);
  std::poisson_distribution<long> pois(std::max(gamma(rng), 1e-12));
  return static_cast<double>(pois(rng));
}

inline double log_normal_count(std::mt19937_64& rng, double log_mean, double log_sd) {
  std::lognormal_distribution<double> d(log_mean, log_sd);
  return std::round(d(rng));
}

inline void write_json(const std::filesystem::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("generate_corpus: cannot write " + p.string());
  out << j.dump(1) << "\n";
}

}  // namespace detail

inline json bookkeeping_to_json(const Bookkeeping& book) {
  json arts = json::array();
  for (const auto& a : book.articles)
    arts.push_back({{"id", a.id},
                    {"label", a.label},
                    {"n_citing", a.n_citing},
                    {"n_retweets", a.n_retweets},
                    {"n_users_citing", a.n_users_citing},
                    {"n_users_all", a.n_users_all},
                    {"timeline_total", a.timeline_total},
                    {"timeline_total_capped", a.timeline_total_capped},
                    {"sum_retweet_count", a.sum_retweet_count}});
  const auto& c = book.config;
  return json{{"config",
               {{"n_articles", c.n_articles},
                {"fake_fraction", c.fake_fraction},
                {"seed", c.seed},
                {"beta", c.beta},
                {"citing_rate_real", c.citing_rate_real},
                {"citing_rate_fake", c.citing_rate_fake},
                {"retweet_node_rate_real", c.retweet_node_rate_real},
                {"retweet_node_rate_fake", c.retweet_node_rate_fake},
                {"retweet_count_mean_real", c.retweet_count_mean_real},
                {"retweet_count_mean_fake", c.retweet_count_mean_fake},
                {"suggested_dtext", c.suggested_dtext}}},
              {"articles", std::move(arts)}};
}

/// Writes a corpus in the ingest layout plus bookkeeping.json.
/// Deterministic given the seed: one RNG stream, fixed generation order.
inline Bookkeeping generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  if (cfg.n_articles < 2) throw std::invalid_argument("generate_corpus: need at least 2 articles");
  if (cfg.fake_fraction <= 0.0 || cfg.fake_fraction >= 1.0)
    throw std::invalid_argument("generate_corpus: fake_fraction must be in (0,1)");
  if (cfg.topic_words == 0 || cfg.topic_words > cfg.vocab_size)
    throw std::invalid_argument("generate_corpus: bad topic_words");

  for (const char* d : {"news", "tweets", "retweets", "users", "timelines"})
    fs::create_directories(out / d);

  std::mt19937_64 rng(cfg.seed);
  detail::WordSampler sampler(cfg);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  Bookkeeping book;
  book.config = cfg;
  json manifest_articles = json::array();

  const int width = static_cast<int>(std::to_string(cfg.n_articles - 1).size());
  for (std::size_t i = 0; i < cfg.n_articles; ++i) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "art%0*zu", width, i);
    const std::string id = idbuf;
    const int label = coin(rng) < cfg.fake_fraction ? 1 : 0;

    ArticleBook ab;
    ab.id = id;
    ab.label = label;

    manifest_articles.push_back({{"id", id}, {"label", label}, {"dataset", "synthetic"}});
    detail::write_json(out / "news" / (id + ".json"),
                       json{{"id", id},
                            {"title", sampler.text(rng, 8, label)},
                            {"text", sampler.text(rng, cfg.news_words, label)}});

    std::poisson_distribution<long> citing_count(label == 1 ? cfg.citing_rate_fake
                                                            : cfg.citing_rate_real);
    const std::size_t n_citing =
        std::max<std::size_t>(cfg.min_citing, static_cast<std::size_t>(citing_count(rng)));
    ab.n_citing = n_citing;
    ab.n_users_citing = n_citing;  // one fresh author per citing tweet

    json tweets = json::array();
    json retweets = json::array();
    json users = json::array();
    json timelines = json::object();
    std::size_t n_users_all = n_citing;

    std::poisson_distribution<long> retweet_nodes(label == 1 ? cfg.retweet_node_rate_fake
                                                             : cfg.retweet_node_rate_real);
    std::poisson_distribution<long> timeline_len(cfg.timeline_rate);

    for (std::size_t k = 0; k < n_citing; ++k) {
      const std::string tid = id + "-t" + std::to_string(k);
      const std::string uid = id + "-u" + std::to_string(k);
      const double rt_count = detail::neg_binomial(
          rng, label == 1 ? cfg.retweet_count_mean_fake : cfg.retweet_count_mean_real,
          cfg.retweet_count_dispersion);
      const double fav_count =
          detail::neg_binomial(rng, cfg.favorite_count_mean, cfg.favorite_count_dispersion);
      ab.sum_retweet_count += rt_count;
      tweets.push_back({{"tweet_id", tid},
                        {"user_id", uid},
                        {"text", sampler.text(rng, cfg.tweet_words, label)},
                        {"retweet_count", rt_count},
                        {"favorite_count", fav_count},
                        {"created_at", 1600000000LL + static_cast<long long>(k)}});
      users.push_back({{"user_id", uid},
                       {"description", sampler.text(rng, cfg.profile_words, 0)},
                       {"followers", detail::log_normal_count(rng, cfg.follower_log_mean,
                                                              cfg.follower_log_sd)},
                       {"friends", detail::log_normal_count(rng, cfg.friends_log_mean,
                                                            cfg.friends_log_sd)},
                       {"favorites", detail::log_normal_count(rng, cfg.favorites_log_mean,
                                                              cfg.favorites_log_sd)},
                       {"statuses", detail::log_normal_count(rng, cfg.statuses_log_mean,
                                                             cfg.statuses_log_sd)}});

      const std::size_t tl = static_cast<std::size_t>(timeline_len(rng));
      ab.timeline_total += tl;
      ab.timeline_total_capped += std::min<std::size_t>(tl, 5);
      if (tl > 0) {
        json posts = json::array();
        for (std::size_t m = 0; m < tl; ++m)
          posts.push_back({{"tweet_id", tid + "-tl" + std::to_string(m)},
                           {"user_id", uid},
                           {"text", sampler.text(rng, cfg.tweet_words, 0)},
                           {"retweet_count",
                            detail::neg_binomial(rng, cfg.retweet_count_mean_real,
                                                 cfg.retweet_count_dispersion)},
                           {"favorite_count",
                            detail::neg_binomial(rng, cfg.favorite_count_mean,
                                                 cfg.favorite_count_dispersion)},
                           {"created_at", 1500000000LL + static_cast<long long>(m)}});
        timelines[uid] = std::move(posts);
      }

      const std::size_t n_rt = static_cast<std::size_t>(retweet_nodes(rng));
      for (std::size_t r = 0; r < n_rt; ++r) {
        const std::string rid = tid + "-r" + std::to_string(r);
        const std::string ruid = id + "-ru" + std::to_string(k) + "-" + std::to_string(r);
        retweets.push_back({{"tweet_id", rid},
                            {"of_tweet_id", tid},
                            {"user_id", ruid},
                            {"text", sampler.text(rng, cfg.tweet_words, label)},
                            {"retweet_count", 0.0},
                            {"favorite_count",
                             detail::neg_binomial(rng, cfg.favorite_count_mean,
                                                  cfg.favorite_count_dispersion)},
                            {"created_at", 1700000000LL + static_cast<long long>(r)}});
        users.push_back(
            {{"user_id", ruid},
             {"description", sampler.text(rng, cfg.profile_words, 0)},
             {"followers",
              detail::log_normal_count(rng, cfg.follower_log_mean, cfg.follower_log_sd)},
             {"friends",
              detail::log_normal_count(rng, cfg.friends_log_mean, cfg.friends_log_sd)},
             {"favorites",
              detail::log_normal_count(rng, cfg.favorites_log_mean, cfg.favorites_log_sd)},
             {"statuses",
              detail::log_normal_count(rng, cfg.statuses_log_mean, cfg.statuses_log_sd)}});
        ++n_users_all;
      }
      ab.n_retweets += n_rt;
    }
    ab.n_users_all = n_users_all;

    detail::write_json(out / "tweets" / (id + ".json"), tweets);
    if (!retweets.empty()) detail::write_json(out / "retweets" / (id + ".json"), retweets);
    detail::write_json(out / "users" / (id + ".json"), users);
    if (!timelines.empty()) detail::write_json(out / "timelines" / (id + ".json"), timelines);

    book.articles.push_back(std::move(ab));
  }

  detail::write_json(out / "manifest.json", json{{"articles", std::move(manifest_articles)}});
  detail::write_json(out / "bookkeeping.json", bookkeeping_to_json(book));
  return book;
}

inline Bookkeeping load_bookkeeping(const std::filesystem::path& corpus_dir) {
  std::ifstream in(corpus_dir / "bookkeeping.json");
  if (!in) throw std::runtime_error("missing bookkeeping.json in " + corpus_dir.string());
  json j;
  in >> j;
  Bookkeeping book;
  book.config.n_articles = j.at("config").value("n_articles", std::size_t{0});
  book.config.seed = j.at("config").value("seed", std::uint64_t{0});
  book.config.beta = j.at("config").value("beta", 0.0);
  book.config.fake_fraction = j.at("config").value("fake_fraction", 0.5);
  book.config.suggested_dtext = j.at("config").value("suggested_dtext", std::size_t{64});
  for (const auto& a : j.at("articles")) {
    ArticleBook ab;
    ab.id = a.at("id").get<std::string>();
    ab.label = a.at("label").get<int>();
    ab.n_citing = a.at("n_citing").get<std::size_t>();
    ab.n_retweets = a.at("n_retweets").get<std::size_t>();
    ab.n_users_citing = a.at("n_users_citing").get<std::size_t>();
    ab.n_users_all = a.at("n_users_all").get<std::size_t>();
    ab.timeline_total = a.at("timeline_total").get<std::size_t>();
    ab.timeline_total_capped = a.at("timeline_total_capped").get<std::size_t>();
    ab.sum_retweet_count = a.at("sum_retweet_count").get<double>();
    book.articles.push_back(std::move(ab));
  }
  return book;
}

}  // namespace hetsmcg::synth
