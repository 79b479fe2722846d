#pragma once

// Embedding baseline: logged snippets are encoded once into a per-resource
// index, and a resource is scored by the mean cosine similarity of its
// top-n snippets to the query.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedbroker/error.hpp"
#include "fedbroker/hash.hpp"
#include "fedbroker/model.hpp"

namespace fedbroker {

using Vector = std::vector<double>;
using Encoder = std::function<Vector(std::string_view)>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "vector dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vector unit_normalized(Vector v) {
  double n = l2_norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::DegenerateVector, "cannot normalize a zero vector");
  if (std::abs(n - 1.0) <= 4 * std::numeric_limits<double>::epsilon()) return v;  // keeps reloaded indexes bit-stable
  for (double& x : v) x /= n;
  return v;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorCode::DegenerateVector, "cosine of a zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// Seeded random-projection hash encoder: each lower-cased alphanumeric token
/// maps to a fixed pseudo-random direction, and a text is the sum of its
/// token directions. Deterministic across platforms.
class HashingEncoder {
 public:
  explicit HashingEncoder(std::size_t dim = 1024, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "encoder dimension must be positive");
  }

  std::size_t dim() const noexcept { return dim_; }

  Vector operator()(std::string_view text) const {
    Vector v(dim_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint64_t state = detail::splitmix64(detail::fnv1a(token) ^ detail::splitmix64(seed_));
      for (std::size_t i = 0; i < dim_; ++i) {
        state = detail::splitmix64(state);
        v[i] += 2.0 * detail::unit_from_hash(state) - 1.0;
      }
      token.clear();
    };
    for (char c : text) {
      unsigned char u = static_cast<unsigned char>(c);
      if (std::isalnum(u) || u >= 0x80) {
        token.push_back(static_cast<char>(std::tolower(u)));
      } else {
        flush();
      }
    }
    flush();
    return v;
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

struct SnippetRef {
  std::string query_id;
  int rank = 1;

  friend bool operator==(const SnippetRef&, const SnippetRef&) = default;
};

struct IndexedSnippet {
  SnippetRef ref;
  Vector vector;  // unit norm
};

/// Immutable per-resource store of unit-normalized snippet vectors.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  /// Normalizes every vector; all must share one dimension.
  explicit EmbeddingIndex(std::map<std::string, std::vector<IndexedSnippet>> entries) : entries_(std::move(entries)) {
    for (auto& [rid, list] : entries_) {
      for (auto& item : list) {
        if (dim_ == 0) dim_ = item.vector.size();
        if (item.vector.size() != dim_)
          throw Error(ErrorCode::LengthMismatch, "vector for resource '" + rid + "' has wrong dimension");
        item.vector = unit_normalized(std::move(item.vector));
      }
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::map<std::string, std::vector<IndexedSnippet>>& entries() const noexcept { return entries_; }

  bool covers(std::string_view resource_id) const {
    auto it = entries_.find(std::string(resource_id));
    return it != entries_.end() && !it->second.empty();
  }

  std::span<const IndexedSnippet> vectors(std::string_view resource_id) const {
    auto it = entries_.find(std::string(resource_id));
    if (it == entries_.end()) throw Error(ErrorCode::UnknownResource, std::string(resource_id));
    return it->second;
  }

  std::size_t total_vectors() const {
    std::size_t n = 0;
    for (const auto& [rid, list] : entries_) n += list.size();
    return n;
  }

 private:
  std::map<std::string, std::vector<IndexedSnippet>> entries_;
  std::size_t dim_ = 0;
};

inline std::string snippet_text(const Snippet& s) {
  if (s.title.empty()) return s.body;
  return s.title + " " + s.body;
}

/// Encodes every logged snippet (title + body), grouped by resource. Each
/// registry resource must have at least one logged snippet.
inline EmbeddingIndex build_embedding_index(const QueryLog& log, const ResourceRegistry& registry,
                                            const Encoder& encoder) {
  std::map<std::string, std::vector<IndexedSnippet>> entries;
  for (const auto& r : registry.resources()) entries[r.id];
  for (const auto& s : log.snippets()) {
    auto it = entries.find(s.resource_id);
    if (it == entries.end()) continue;
    it->second.push_back({{s.query_id, s.rank}, encoder(snippet_text(s))});
  }
  for (const auto& [rid, list] : entries) {
    if (list.empty()) throw Error(ErrorCode::ResourceWithoutSnippets, rid);
  }
  return EmbeddingIndex(std::move(entries));
}

/// Mean of the `top_n` largest values (fewer if fewer are available).
inline double mean_of_top(std::vector<double> values, std::size_t top_n) {
  if (values.empty() || top_n == 0) return 0.0;
  std::size_t n = std::min(top_n, values.size());
  std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n), values.end(), std::greater<>());
  return std::accumulate(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

inline double embedding_score_vector(std::span<const double> query_vector, std::string_view resource_id,
                                     const EmbeddingIndex& index, std::size_t top_n = 3) {
  auto stored = index.vectors(resource_id);
  std::vector<double> sims;
  sims.reserve(stored.size());
  for (const auto& item : stored) sims.push_back(cosine_similarity(query_vector, item.vector));
  return mean_of_top(std::move(sims), top_n);
}

inline double embedding_score(const Query& query, std::string_view resource_id, const EmbeddingIndex& index,
                              const Encoder& encoder, std::size_t top_n = 3) {
  if (!index.covers(resource_id)) throw Error(ErrorCode::UnknownResource, std::string(resource_id));
  return embedding_score_vector(encoder(query.text), resource_id, index, top_n);
}

/// Picks, for a query, the logged snippets of a resource most similar to it.
/// Feeds the snippet segment of the selection prompt.
class SimilarSnippetSampler {
 public:
  SimilarSnippetSampler(const EmbeddingIndex& index, const QueryLog& log, Encoder encoder)
      : index_(index), log_(log), encoder_(std::move(encoder)) {}

  /// Snippets logged for `exclude_query_id` are skipped so a logged query
  /// never sees its own results.
  std::vector<Snippet> sample(const Query& query, std::string_view resource_id, std::size_t count,
                              std::string_view exclude_query_id = {}) const {
    if (!index_.covers(resource_id)) return {};
    Vector qv = encoder_(query.text);
    std::vector<std::pair<double, const IndexedSnippet*>> scored;
    for (const auto& item : index_.vectors(resource_id)) {
      if (!exclude_query_id.empty() && item.ref.query_id == exclude_query_id) continue;
      scored.emplace_back(cosine_similarity(qv, item.vector), &item);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return std::tie(a.second->ref.query_id, a.second->ref.rank) < std::tie(b.second->ref.query_id, b.second->ref.rank);
    });
    std::vector<Snippet> out;
    for (std::size_t i = 0; i < scored.size() && out.size() < count; ++i) {
      if (const Snippet* s = log_.find(resource_id, scored[i].second->ref.query_id, scored[i].second->ref.rank)) {
        out.push_back(*s);
      }
    }
    return out;
  }

 private:
  const EmbeddingIndex& index_;
  const QueryLog& log_;
  Encoder encoder_;
};

// Index persistence: one JSON object per vector.
inline OrderedJson to_json_value(const std::string& resource_id, const IndexedSnippet& s) {
  OrderedJson j;
  j["resource_id"] = resource_id;
  j["query_id"] = s.ref.query_id;
  j["rank"] = s.ref.rank;
  j["vector"] = s.vector;
  return j;
}

}  // namespace fedbroker
