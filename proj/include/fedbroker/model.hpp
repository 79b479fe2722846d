#pragma once

// Shared domain types for the federation: resources, queries, logged
// snippets, graded judgments and resource rankings, with their canonical
// JSON encodings.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "fedbroker/error.hpp"

namespace fedbroker {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct Resource {
  std::string id;
  std::string name;
  std::string url;
  std::optional<std::string> description;
  bool discontinued = false;

  friend bool operator==(const Resource&, const Resource&) = default;
};

enum class QueryKind { AdHoc, Conversational };
enum class QueryOrigin { Test, Logged, Generated };

struct Query {
  std::string id;
  std::string text;
  QueryKind kind = QueryKind::AdHoc;
  QueryOrigin origin = QueryOrigin::Test;
  // Set only for Generated queries: the logged query they were derived from.
  std::optional<std::string> source_query_id;

  friend bool operator==(const Query&, const Query&) = default;
};

struct Snippet {
  std::string resource_id;
  std::string query_id;
  int rank = 1;
  std::string title;
  std::string body;

  friend bool operator==(const Snippet&, const Snippet&) = default;
};

enum class JudgmentSource { Synthetic, Imported };

struct RawScores {
  int M = 0;  // match with the query intent
  int T = 0;  // trustworthiness
  int O = 0;  // overall

  friend bool operator==(const RawScores&, const RawScores&) = default;
};

/// Relevance levels on the 0-4 judging scale.
enum class RelevanceLevel : int { NonRelevant = 0, Relevant = 1, HighlyRelevant = 2, Key = 3, Navigational = 4 };

inline int clamp_level(int value) { return std::clamp(value, 0, 4); }

struct Judgment {
  std::string resource_id;
  std::string query_id;
  int snippet_rank = 1;
  int level = 0;
  JudgmentSource source = JudgmentSource::Synthetic;
  std::optional<RawScores> raw_scores;

  friend bool operator==(const Judgment&, const Judgment&) = default;
};

enum class RankingMethod { ReSLLM, EmbeddingBaseline, Oracle };

struct RankingEntry {
  std::string resource_id;
  double score = 0.0;

  friend bool operator==(const RankingEntry&, const RankingEntry&) = default;
};

struct ResourceRanking {
  std::string query_id;
  std::vector<RankingEntry> entries;
  RankingMethod method = RankingMethod::ReSLLM;

  friend bool operator==(const ResourceRanking&, const ResourceRanking&) = default;
};

/// Descending score, ties broken by ascending resource id.
inline bool ranks_before(const RankingEntry& a, const RankingEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.resource_id < b.resource_id;
}

inline void sort_entries(std::vector<RankingEntry>& entries) {
  std::sort(entries.begin(), entries.end(), ranks_before);
}

// ---------------------------------------------------------------------------
// Enum spellings

inline std::string_view to_string(QueryKind k) {
  return k == QueryKind::AdHoc ? "adhoc" : "conversational";
}
inline std::string_view to_string(QueryOrigin o) {
  switch (o) {
    case QueryOrigin::Test: return "test";
    case QueryOrigin::Logged: return "logged";
    case QueryOrigin::Generated: return "generated";
  }
  return "test";
}
inline std::string_view to_string(JudgmentSource s) {
  return s == JudgmentSource::Synthetic ? "synthetic" : "imported";
}
inline std::string_view to_string(RankingMethod m) {
  switch (m) {
    case RankingMethod::ReSLLM: return "resllm";
    case RankingMethod::EmbeddingBaseline: return "embedding";
    case RankingMethod::Oracle: return "oracle";
  }
  return "resllm";
}

namespace detail {
template <typename E, std::size_t N>
E parse_enum(std::string_view text, const std::pair<std::string_view, E> (&table)[N], std::string_view what) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  throw Error(ErrorCode::ParseError, std::string("unknown ") + std::string(what) + " '" + std::string(text) + "'");
}
}  // namespace detail

inline QueryKind parse_query_kind(std::string_view s) {
  static constexpr std::pair<std::string_view, QueryKind> table[] = {
      {"adhoc", QueryKind::AdHoc}, {"conversational", QueryKind::Conversational}};
  return detail::parse_enum(s, table, "query kind");
}
inline QueryOrigin parse_query_origin(std::string_view s) {
  static constexpr std::pair<std::string_view, QueryOrigin> table[] = {
      {"test", QueryOrigin::Test}, {"logged", QueryOrigin::Logged}, {"generated", QueryOrigin::Generated}};
  return detail::parse_enum(s, table, "query origin");
}
inline JudgmentSource parse_judgment_source(std::string_view s) {
  static constexpr std::pair<std::string_view, JudgmentSource> table[] = {
      {"synthetic", JudgmentSource::Synthetic}, {"imported", JudgmentSource::Imported}};
  return detail::parse_enum(s, table, "judgment source");
}
inline RankingMethod parse_ranking_method(std::string_view s) {
  static constexpr std::pair<std::string_view, RankingMethod> table[] = {
      {"resllm", RankingMethod::ReSLLM},
      {"embedding", RankingMethod::EmbeddingBaseline},
      {"oracle", RankingMethod::Oracle}};
  return detail::parse_enum(s, table, "ranking method");
}

// ---------------------------------------------------------------------------
// Validation

inline void validate(const Resource& r) {
  if (trim(r.id).empty()) throw Error(ErrorCode::EmptyField, "resource with empty id");
  if (trim(r.name).empty()) throw Error(ErrorCode::EmptyField, "resource '" + r.id + "' has empty name");
  if (trim(r.url).empty()) throw Error(ErrorCode::EmptyField, "resource '" + r.id + "' has empty url");
}

inline void validate(const Query& q) {
  if (trim(q.id).empty()) throw Error(ErrorCode::EmptyField, "query with empty id");
  if (trim(q.text).empty()) throw Error(ErrorCode::EmptyField, "query '" + q.id + "' has empty text");
  if (q.origin == QueryOrigin::Generated && !q.source_query_id)
    throw Error(ErrorCode::EmptyField, "generated query '" + q.id + "' lacks source_query_id");
}

inline void validate(const Snippet& s) {
  if (s.rank < 1) throw Error(ErrorCode::OutOfRange, "snippet rank must be >= 1, got " + std::to_string(s.rank));
}

inline void validate(const Judgment& j) {
  if (j.level < 0 || j.level > 4)
    throw Error(ErrorCode::OutOfRange, "judgment level " + std::to_string(j.level) + " outside [0,4]");
  if (j.raw_scores && j.level != clamp_level(j.raw_scores->O))
    throw Error(ErrorCode::InvalidArgument, "judgment level disagrees with raw overall score");
}

/// Read-only id-indexed view of the federation. Built once by
/// `validate_registry`; preserves insertion order for iteration.
class ResourceRegistry {
 public:
  const std::vector<Resource>& resources() const noexcept { return resources_; }
  std::size_t size() const noexcept { return resources_.size(); }
  bool empty() const noexcept { return resources_.empty(); }

  bool contains(std::string_view id) const { return index_.find(std::string(id)) != index_.end(); }

  const Resource& at(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw Error(ErrorCode::UnknownId, "no resource '" + std::string(id) + "'");
    return resources_[it->second];
  }

 private:
  friend ResourceRegistry validate_registry(std::vector<Resource> resources);
  std::vector<Resource> resources_;
  std::map<std::string, std::size_t> index_;
};

inline ResourceRegistry validate_registry(std::vector<Resource> resources) {
  if (resources.empty()) throw Error(ErrorCode::EmptyRegistry, "resource list is empty");
  ResourceRegistry registry;
  for (std::size_t i = 0; i < resources.size(); ++i) {
    validate(resources[i]);
    if (!registry.index_.emplace(resources[i].id, i).second)
      throw Error(ErrorCode::DuplicateId, resources[i].id);
  }
  registry.resources_ = std::move(resources);
  return registry;
}

/// Logged queries plus the top-m snippets each resource returned for them.
/// Queries are kept sorted by id and snippets by (query, resource, rank), so
/// iteration order does not depend on input order.
class QueryLog {
 public:
  QueryLog() = default;

  QueryLog(std::vector<Query> queries, std::vector<Snippet> snippets, int depth = 10)
      : queries_(std::move(queries)), snippets_(std::move(snippets)), depth_(depth) {
    std::sort(queries_.begin(), queries_.end(), [](const Query& a, const Query& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < queries_.size(); ++i) {
      if (queries_[i].origin != QueryOrigin::Logged)
        throw Error(ErrorCode::InvalidArgument, "query log holds non-logged query '" + queries_[i].id + "'");
      if (i > 0 && queries_[i].id == queries_[i - 1].id) throw Error(ErrorCode::DuplicateId, queries_[i].id);
    }
    std::sort(snippets_.begin(), snippets_.end(), [](const Snippet& a, const Snippet& b) {
      return std::tie(a.query_id, a.resource_id, a.rank) < std::tie(b.query_id, b.resource_id, b.rank);
    });
    for (std::size_t i = 0; i < snippets_.size();) {
      const auto& head = snippets_[i];
      if (!has_query(head.query_id))
        throw Error(ErrorCode::DanglingReference, "snippet references unknown logged query '" + head.query_id + "'");
      std::size_t j = i;
      while (j < snippets_.size() && snippets_[j].query_id == head.query_id &&
             snippets_[j].resource_id == head.resource_id) {
        ++j;
      }
      groups_.emplace(std::make_pair(head.query_id, head.resource_id), std::make_pair(i, j));
      i = j;
    }
  }

  const std::vector<Query>& queries() const noexcept { return queries_; }
  const std::vector<Snippet>& snippets() const noexcept { return snippets_; }
  int depth() const noexcept { return depth_; }

  bool has_query(std::string_view id) const {
    auto it = std::lower_bound(queries_.begin(), queries_.end(), id,
                               [](const Query& q, std::string_view v) { return q.id < v; });
    return it != queries_.end() && it->id == id;
  }

  /// Snippets of one (query, resource) group sorted by rank.
  std::span<const Snippet> group(std::string_view query_id, std::string_view resource_id) const {
    auto it = groups_.find(std::make_pair(std::string(query_id), std::string(resource_id)));
    if (it == groups_.end()) return {};
    return std::span<const Snippet>(snippets_).subspan(it->second.first, it->second.second - it->second.first);
  }

  const Snippet* find(std::string_view resource_id, std::string_view query_id, int rank) const {
    for (const auto& s : group(query_id, resource_id)) {
      if (s.rank == rank) return &s;
    }
    return nullptr;
  }

 private:
  std::vector<Query> queries_;
  std::vector<Snippet> snippets_;
  std::map<std::pair<std::string, std::string>, std::pair<std::size_t, std::size_t>> groups_;
  int depth_ = 10;
};

/// Checks the snippet key invariants: (resource, query, rank) unique and
/// ranks contiguous from 1 within each group.
inline void validate_snippet_groups(const std::vector<Snippet>& snippets) {
  std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
  for (const auto& s : snippets) {
    validate(s);
    groups[{s.resource_id, s.query_id}].push_back(s.rank);
  }
  for (auto& [key, ranks] : groups) {
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      if (ranks[i] != static_cast<int>(i) + 1) {
        throw Error(ErrorCode::InvalidArgument, "snippet ranks for (" + key.first + ", " + key.second +
                                                    ") are not contiguous from 1");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON encodings. Writers use ordered_json so field order is stable.

inline OrderedJson to_json_value(const Resource& r) {
  OrderedJson j;
  j["id"] = r.id;
  j["name"] = r.name;
  j["url"] = r.url;
  if (r.description) j["description"] = *r.description;
  j["discontinued"] = r.discontinued;
  return j;
}

inline OrderedJson to_json_value(const Query& q) {
  OrderedJson j;
  j["id"] = q.id;
  j["text"] = q.text;
  j["kind"] = to_string(q.kind);
  j["origin"] = to_string(q.origin);
  if (q.source_query_id) j["source_query_id"] = *q.source_query_id;
  return j;
}

inline OrderedJson to_json_value(const Snippet& s) {
  OrderedJson j;
  j["resource_id"] = s.resource_id;
  j["query_id"] = s.query_id;
  j["rank"] = s.rank;
  j["title"] = s.title;
  j["body"] = s.body;
  return j;
}

inline OrderedJson to_json_value(const Judgment& jd) {
  OrderedJson j;
  j["resource_id"] = jd.resource_id;
  j["query_id"] = jd.query_id;
  j["snippet_rank"] = jd.snippet_rank;
  j["level"] = jd.level;
  j["source"] = to_string(jd.source);
  if (jd.raw_scores) j["raw_scores"] = OrderedJson{{"M", jd.raw_scores->M}, {"T", jd.raw_scores->T}, {"O", jd.raw_scores->O}};
  return j;
}

inline OrderedJson to_json_value(const ResourceRanking& r) {
  OrderedJson j;
  j["query_id"] = r.query_id;
  j["method"] = to_string(r.method);
  OrderedJson entries = OrderedJson::array();
  for (const auto& e : r.entries) entries.push_back(OrderedJson{{"resource_id", e.resource_id}, {"score", e.score}});
  j["entries"] = std::move(entries);
  return j;
}

namespace detail {
template <typename T>
T required(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
  }
}
}  // namespace detail

inline Resource resource_from_json(const Json& j) {
  Resource r;
  r.id = detail::required<std::string>(j, "id");
  r.name = detail::required<std::string>(j, "name");
  r.url = detail::required<std::string>(j, "url");
  r.description = detail::optional_field<std::string>(j, "description");
  r.discontinued = detail::optional_field<bool>(j, "discontinued").value_or(false);
  return r;
}

inline Query query_from_json(const Json& j) {
  Query q;
  q.id = detail::required<std::string>(j, "id");
  q.text = detail::required<std::string>(j, "text");
  q.kind = parse_query_kind(detail::optional_field<std::string>(j, "kind").value_or("adhoc"));
  q.origin = parse_query_origin(detail::optional_field<std::string>(j, "origin").value_or("test"));
  q.source_query_id = detail::optional_field<std::string>(j, "source_query_id");
  return q;
}

inline Snippet snippet_from_json(const Json& j) {
  Snippet s;
  s.resource_id = detail::required<std::string>(j, "resource_id");
  s.query_id = detail::required<std::string>(j, "query_id");
  s.rank = detail::required<int>(j, "rank");
  s.title = detail::optional_field<std::string>(j, "title").value_or("");
  s.body = detail::optional_field<std::string>(j, "body").value_or("");
  return s;
}

inline Judgment judgment_from_json(const Json& j) {
  Judgment jd;
  jd.resource_id = detail::required<std::string>(j, "resource_id");
  jd.query_id = detail::required<std::string>(j, "query_id");
  jd.snippet_rank = detail::required<int>(j, "snippet_rank");
  jd.level = detail::required<int>(j, "level");
  jd.source = parse_judgment_source(detail::optional_field<std::string>(j, "source").value_or("imported"));
  if (auto raw = j.find("raw_scores"); raw != j.end() && !raw->is_null()) {
    jd.raw_scores = RawScores{detail::required<int>(*raw, "M"), detail::required<int>(*raw, "T"),
                              detail::required<int>(*raw, "O")};
  }
  return jd;
}

inline ResourceRanking ranking_from_json(const Json& j) {
  ResourceRanking r;
  r.query_id = detail::required<std::string>(j, "query_id");
  r.method = parse_ranking_method(detail::optional_field<std::string>(j, "method").value_or("resllm"));
  for (const auto& e : detail::required<Json>(j, "entries")) {
    r.entries.push_back({detail::required<std::string>(e, "resource_id"), detail::required<double>(e, "score")});
  }
  return r;
}

}  // namespace fedbroker
