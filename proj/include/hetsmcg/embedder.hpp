#pragma once

#include <openssl/evp.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hetsmcg::ingest {

inline std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// What to do when a precomputed lookup has no entry for a text.
enum class MissPolicy { Error, ZeroVector };

struct EmbedderSpec {
  enum class Kind { Hashing, Precomputed };
  Kind kind = Kind::Hashing;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::filesystem::path lookup_file;  // precomputed mode
  MissPolicy miss_policy = MissPolicy::Error;
};

/// Deterministic text-to-vector embedder. The hashing mode lowercases,
/// splits on anything that is not alphanumeric (bytes >= 0x80 count as word
/// characters so UTF-8 sequences stay inside tokens), hashes each token to a
/// signed bucket and L2-normalizes the result; a zero vector stays zero.
/// The precomputed mode looks texts up by their SHA-256 content key.
class TextEmbedder {
 public:
  explicit TextEmbedder(EmbedderSpec spec) : spec_(std::move(spec)) {
    if (spec_.dim == 0) throw std::invalid_argument("embedder: dim must be positive");
    if (spec_.kind == EmbedderSpec::Kind::Precomputed) load_lookup();
  }

  std::size_t dim() const { return spec_.dim; }
  const EmbedderSpec& spec() const { return spec_; }
  std::size_t miss_warnings() const { return miss_warnings_; }

  std::vector<double> embed(std::string_view text) {
    if (spec_.kind == EmbedderSpec::Kind::Hashing) return embed_hashing(text);
    return embed_precomputed(text);
  }

 private:
  std::vector<double> embed_hashing(std::string_view text) const {
    std::vector<double> v(spec_.dim, 0.0);
    const std::uint64_t salt = detail::mix64(spec_.seed);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const std::uint64_t h = detail::mix64(detail::fnv1a64(token) ^ salt);
      const std::size_t bucket = static_cast<std::size_t>((h >> 1) % spec_.dim);
      v[bucket] += (h & 1u) ? 1.0 : -1.0;
      token.clear();
    };
    for (unsigned char c : text) {
      if (c >= 0x80 || std::isalnum(c))
        token.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
      else
        flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

  std::vector<double> embed_precomputed(std::string_view text) {
    const auto it = lookup_.find(sha256_hex(text));
    if (it != lookup_.end()) return it->second;
    if (spec_.miss_policy == MissPolicy::Error)
      throw std::runtime_error("embedder: no precomputed vector for text");
    ++miss_warnings_;
    return std::vector<double>(spec_.dim, 0.0);
  }

  void load_lookup() {
    std::ifstream in(spec_.lookup_file);
    if (!in)
      throw std::runtime_error("embedder: cannot read lookup file " +
                               spec_.lookup_file.string());
    nlohmann::json j;
    in >> j;
    for (const auto& [key, arr] : j.items()) {
      std::vector<double> vec = arr.get<std::vector<double>>();
      if (vec.size() != spec_.dim)
        throw std::runtime_error("embedder: lookup vector dim mismatch for key " + key);
      lookup_.emplace(key, std::move(vec));
    }
  }

  EmbedderSpec spec_;
  std::map<std::string, std::vector<double>> lookup_;
  std::size_t miss_warnings_ = 0;
};

}  // namespace hetsmcg::ingest
