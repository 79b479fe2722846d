#pragma once

// Loads a federation dataset from the canonical JSONL layout
//
//   <dir>/resources.jsonl  queries.jsonl  snippets.jsonl  [judgments.jsonl]  [qrels.jsonl]
//
// described by a manifest.json carrying each file's record count and sha256.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedbroker/embedding.hpp"
#include "fedbroker/eval.hpp"
#include "fedbroker/io.hpp"
#include "fedbroker/model.hpp"

namespace fedbroker {

inline const std::vector<std::string>& dataset_kinds() {
  static const std::vector<std::string> kinds{"resources", "queries", "snippets", "judgments", "qrels"};
  return kinds;
}

inline bool kind_required(std::string_view kind) {
  return kind == "resources" || kind == "queries" || kind == "snippets";
}

/// File entries keyed by kind. Entry paths are relative to `base_dir`.
struct DatasetManifest {
  fs::path base_dir;
  std::map<std::string, ManifestEntry> files;
};

inline OrderedJson to_json_value(const DatasetManifest& m) {
  OrderedJson files = OrderedJson::object();
  for (const auto& kind : dataset_kinds()) {
    auto it = m.files.find(kind);
    if (it != m.files.end()) files[kind] = to_json_value(it->second);
  }
  for (const auto& [kind, entry] : m.files) {
    if (!files.contains(kind)) files[kind] = to_json_value(entry);
  }
  return OrderedJson{{"version", 1}, {"files", std::move(files)}};
}

/// Scans a data directory and records count + checksum of each canonical file.
inline DatasetManifest manifest_for_directory(const fs::path& dir) {
  DatasetManifest m;
  m.base_dir = dir;
  for (const auto& kind : dataset_kinds()) {
    fs::path p = dir / (kind + ".jsonl");
    if (!fs::exists(p)) {
      if (kind_required(kind)) throw Error(ErrorCode::IoError, "missing required file " + p.string());
      continue;
    }
    std::string content = read_file(p);
    m.files[kind] = ManifestEntry{kind + ".jsonl", count_records(content), sha256_hex(content)};
  }
  return m;
}

inline ManifestEntry write_manifest(const DatasetManifest& m, const fs::path& path) {
  std::string content = to_json_value(m).dump(2) + "\n";
  write_atomic(path, content);
  return {path.string(), m.files.size(), sha256_hex(content)};
}

inline DatasetManifest read_manifest(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  for (const auto& [kind, entry] : j.at("files").items()) {
    m.files[kind] = ManifestEntry{detail::required<std::string>(entry, "path"), detail::required<std::size_t>(entry, "count"),
                                  entry.value("sha256", "")};
  }
  return m;
}

struct Dataset {
  ResourceRegistry registry;
  std::vector<Query> test_queries;
  std::vector<Query> generated_queries;
  QueryLog query_log;
  std::vector<Snippet> test_snippets;  // snippets returned for test queries
  std::vector<Judgment> judgments;
  std::optional<ResourceQrels> qrels;

  const Query* find_query(std::string_view id) const {
    for (const auto* list : {&test_queries, &generated_queries, &query_log.queries()}) {
      for (const auto& q : *list) {
        if (q.id == id) return &q;
      }
    }
    return nullptr;
  }
};

namespace detail {
inline fs::path verified_path(const DatasetManifest& m, const std::string& kind) {
  const ManifestEntry& entry = m.files.at(kind);
  fs::path p = fs::path(entry.path).is_absolute() ? fs::path(entry.path) : m.base_dir / entry.path;
  if (!fs::exists(p)) throw Error(ErrorCode::IoError, "manifest references missing file " + p.string());
  std::string content = read_file(p);
  std::size_t lines = count_records(content);
  if (lines != entry.count)
    throw Error(ErrorCode::CountMismatch,
                kind + ": manifest says " + std::to_string(entry.count) + " records, file has " + std::to_string(lines));
  if (!entry.sha256.empty() && entry.sha256 != sha256_hex(content))
    throw Error(ErrorCode::ChecksumMismatch, p.string());
  return p;
}
}  // namespace detail

inline Dataset load_dataset(const DatasetManifest& manifest) {
  for (const auto& kind : dataset_kinds()) {
    if (kind_required(kind) && !manifest.files.contains(kind))
      throw Error(ErrorCode::IoError, "manifest lacks required '" + kind + "' entry");
  }
  auto resources = read_jsonl(detail::verified_path(manifest, "resources"), resource_from_json);
  auto queries = read_jsonl(detail::verified_path(manifest, "queries"), query_from_json);
  auto snippets = read_jsonl(detail::verified_path(manifest, "snippets"), snippet_from_json);

  std::sort(resources.begin(), resources.end(), [](const Resource& a, const Resource& b) { return a.id < b.id; });
  Dataset ds;
  ds.registry = validate_registry(std::move(resources));

  std::set<std::string> query_ids;
  std::set<std::string> logged_ids;
  std::vector<Query> logged;
  for (auto& q : queries) {
    validate(q);
    if (!query_ids.insert(q.id).second) throw Error(ErrorCode::DuplicateId, "query '" + q.id + "'");
    switch (q.origin) {
      case QueryOrigin::Logged:
        logged_ids.insert(q.id);
        logged.push_back(std::move(q));
        break;
      case QueryOrigin::Test: ds.test_queries.push_back(std::move(q)); break;
      case QueryOrigin::Generated: ds.generated_queries.push_back(std::move(q)); break;
    }
  }
  auto by_id = [](const Query& a, const Query& b) { return a.id < b.id; };
  std::sort(ds.test_queries.begin(), ds.test_queries.end(), by_id);
  std::sort(ds.generated_queries.begin(), ds.generated_queries.end(), by_id);
  for (const auto& q : ds.generated_queries) {
    if (!query_ids.contains(*q.source_query_id)) throw Error(ErrorCode::DanglingReference, "query " + *q.source_query_id);
  }

  auto check_refs = [&](const std::string& rid, const std::string& qid) {
    if (!ds.registry.contains(rid)) throw Error(ErrorCode::DanglingReference, "resource " + rid);
    if (!query_ids.contains(qid)) throw Error(ErrorCode::DanglingReference, "query " + qid);
  };
  validate_snippet_groups(snippets);
  std::vector<Snippet> log_snippets;
  for (auto& s : snippets) {
    check_refs(s.resource_id, s.query_id);
    if (logged_ids.contains(s.query_id)) log_snippets.push_back(std::move(s));
    else ds.test_snippets.push_back(std::move(s));
  }
  std::sort(ds.test_snippets.begin(), ds.test_snippets.end(), [](const Snippet& a, const Snippet& b) {
    return std::tie(a.query_id, a.resource_id, a.rank) < std::tie(b.query_id, b.resource_id, b.rank);
  });
  ds.query_log = QueryLog(std::move(logged), std::move(log_snippets));

  if (manifest.files.contains("judgments")) {
    ds.judgments = read_jsonl(detail::verified_path(manifest, "judgments"), judgment_from_json);
    for (const auto& j : ds.judgments) {
      validate(j);
      check_refs(j.resource_id, j.query_id);
    }
    std::sort(ds.judgments.begin(), ds.judgments.end(), [](const Judgment& a, const Judgment& b) {
      return std::tie(a.query_id, a.resource_id, a.snippet_rank) < std::tie(b.query_id, b.resource_id, b.snippet_rank);
    });
  }
  if (manifest.files.contains("qrels")) {
    ResourceQrels qrels;
    read_jsonl(detail::verified_path(manifest, "qrels"), [&](const Json& j) {
      add_qrel_record(qrels, j);
      return 0;
    });
    for (const auto& [qid, gains] : qrels) {
      if (!query_ids.contains(qid)) throw Error(ErrorCode::DanglingReference, "query " + qid);
      for (const auto& [rid, g] : gains) {
        if (!ds.registry.contains(rid)) throw Error(ErrorCode::DanglingReference, "resource " + rid);
      }
    }
    ds.qrels = std::move(qrels);
  }
  return ds;
}

inline Dataset load_dataset_directory(const fs::path& dir) {
  fs::path manifest = dir / "manifest.json";
  return load_dataset(fs::exists(manifest) ? read_manifest(manifest) : manifest_for_directory(dir));
}

inline ResourceQrels read_qrels(const fs::path& path) {
  ResourceQrels qrels;
  read_jsonl(path, [&](const Json& j) {
    add_qrel_record(qrels, j);
    return 0;
  });
  return qrels;
}

/// Writes a dataset back out in canonical form.
inline DatasetManifest persist_dataset(const Dataset& ds, const fs::path& dir) {
  DatasetManifest m;
  m.base_dir = dir;
  auto rel = [](ManifestEntry e, const std::string& name) {
    e.path = name;
    return e;
  };
  m.files["resources"] = rel(write_jsonl(dir / "resources.jsonl", ds.registry.resources()), "resources.jsonl");
  std::vector<Query> queries = ds.test_queries;
  queries.insert(queries.end(), ds.query_log.queries().begin(), ds.query_log.queries().end());
  queries.insert(queries.end(), ds.generated_queries.begin(), ds.generated_queries.end());
  m.files["queries"] = rel(write_jsonl(dir / "queries.jsonl", queries), "queries.jsonl");
  std::vector<Snippet> snippets = ds.query_log.snippets();
  snippets.insert(snippets.end(), ds.test_snippets.begin(), ds.test_snippets.end());
  m.files["snippets"] = rel(write_jsonl(dir / "snippets.jsonl", snippets), "snippets.jsonl");
  if (!ds.judgments.empty()) m.files["judgments"] = rel(write_jsonl(dir / "judgments.jsonl", ds.judgments), "judgments.jsonl");
  if (ds.qrels) m.files["qrels"] = rel(write_jsonl(dir / "qrels.jsonl", qrels_records(*ds.qrels), [](const OrderedJson& j) { return j; }), "qrels.jsonl");
  write_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace fedbroker

namespace fedbroker {

inline ManifestEntry write_embedding_index(const EmbeddingIndex& index, const fs::path& path) {
  std::vector<OrderedJson> rows;
  rows.reserve(index.total_vectors());
  for (const auto& [rid, list] : index.entries()) {
    for (const auto& item : list) rows.push_back(to_json_value(rid, item));
  }
  return write_jsonl(path, rows, [](const OrderedJson& j) { return j; });
}

inline EmbeddingIndex read_embedding_index(const fs::path& path) {
  std::map<std::string, std::vector<IndexedSnippet>> entries;
  read_jsonl(path, [&](const Json& j) {
    entries[detail::required<std::string>(j, "resource_id")].push_back(
        {{detail::required<std::string>(j, "query_id"), detail::required<int>(j, "rank")},
         detail::required<Vector>(j, "vector")});
    return 0;
  });
  return EmbeddingIndex(std::move(entries));
}

}  // namespace fedbroker
