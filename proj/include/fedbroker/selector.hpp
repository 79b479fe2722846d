#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbroker/embedding.hpp"
#include "fedbroker/llm_client.hpp"
#include "fedbroker/model.hpp"
#include "fedbroker/parallel.hpp"
#include "fedbroker/prompting.hpp"

namespace fedbroker {

enum class SelectionMethod { ReSLLM, EmbeddingBaseline };

inline std::string_view to_string(SelectionMethod m) {
  return m == SelectionMethod::ReSLLM ? "resllm" : "embedding";
}

inline SelectionMethod parse_selection_method(std::string_view s) {
  static constexpr std::pair<std::string_view, SelectionMethod> table[] = {
      {"resllm", SelectionMethod::ReSLLM}, {"embedding", SelectionMethod::EmbeddingBaseline}};
  return detail::parse_enum(s, table, "selection method");
}

inline RankingMethod ranking_method(SelectionMethod m) {
  return m == SelectionMethod::ReSLLM ? RankingMethod::ReSLLM : RankingMethod::EmbeddingBaseline;
}

struct SelectionRequest {
  Query query;
  std::optional<int> k;
  SelectionMethod method = SelectionMethod::ReSLLM;
  RepresentationConfig representation;
  // Drop resources whose score is negative; a score of exactly 0 is kept.
  bool filter_nonpositive = false;
};

/// Everything a ranking needs besides the request. Pointers that a method
/// does not use may stay null.
struct SelectionContext {
  const ResourceRegistry* registry = nullptr;
  LlmClient* client = nullptr;
  const EmbeddingIndex* index = nullptr;
  const Encoder* encoder = nullptr;
  const SimilarSnippetSampler* sampler = nullptr;
  const TemplateSet* templates = &TemplateSet::builtin();
  std::size_t embedding_top_n = 3;
};

/// score(q, r) = P(yes | q, r) - P(no | q, r) on the rendered selection prompt.
inline double score_resource(LlmClient& client, const Query& query, const Resource& resource,
                             const RepresentationConfig& config, std::span<const Snippet> similar_snippets = {},
                             const TemplateSet& templates = TemplateSet::builtin()) {
  RenderedPrompt prompt = build_selection_prompt(resource, query, similar_snippets, config, templates);
  TokenChoiceScore s = client.score_yes_no(prompt);
  return s.p_yes - s.p_no;
}

/// Sorts scored resources, then applies the optional non-negative filter
/// and top-k cut. Shared by every ranking method.
inline ResourceRanking assemble_ranking(std::string query_id, std::vector<RankingEntry> entries,
                                        RankingMethod method, std::optional<int> k, bool filter_nonpositive) {
  sort_entries(entries);
  if (filter_nonpositive) {
    std::erase_if(entries, [](const RankingEntry& e) { return e.score < 0.0; });
    if (entries.empty()) throw Error(ErrorCode::AllFiltered, "every resource scored below 0 for query '" + query_id + "'");
  }
  if (k && entries.size() > static_cast<std::size_t>(*k)) entries.resize(static_cast<std::size_t>(*k));
  return ResourceRanking{std::move(query_id), std::move(entries), method};
}

inline ResourceRanking rank_resources(const SelectionRequest& request, const SelectionContext& ctx) {
  if (!ctx.registry || ctx.registry->empty()) throw Error(ErrorCode::EmptyRegistry, "no resources to rank");
  const auto& resources = ctx.registry->resources();
  if (request.k && (*request.k < 1 || static_cast<std::size_t>(*request.k) > resources.size()))
    throw Error(ErrorCode::InvalidArgument, "k must lie in [1, " + std::to_string(resources.size()) + "]");
  validate(request.query);

  std::vector<RankingEntry> entries(resources.size());
  if (request.method == SelectionMethod::ReSLLM) {
    if (!ctx.client) throw Error(ErrorCode::InvalidArgument, "ReSLLM ranking needs an LLM client");
    request.representation.validate();
    if (request.representation.use_similar_snippets && !ctx.sampler)
      throw Error(ErrorCode::InvalidArgument, "snippet representation needs a snippet sampler");
    parallel_for(resources.size(), ctx.client->concurrency(), [&](std::size_t i) {
      std::vector<Snippet> similar;
      if (request.representation.use_similar_snippets)
        similar = ctx.sampler->sample(request.query, resources[i].id,
                                      static_cast<std::size_t>(request.representation.snippet_count));
      entries[i] = {resources[i].id, score_resource(*ctx.client, request.query, resources[i], request.representation,
                                                    similar, *ctx.templates)};
    });
  } else {
    if (!ctx.index || !ctx.encoder) throw Error(ErrorCode::InvalidArgument, "embedding ranking needs an index and encoder");
    for (const auto& r : resources) {
      if (!ctx.index->covers(r.id)) throw Error(ErrorCode::UnknownResource, "index lacks resource '" + r.id + "'");
    }
    Vector qv = (*ctx.encoder)(request.query.text);
    for (std::size_t i = 0; i < resources.size(); ++i) {
      entries[i] = {resources[i].id, embedding_score_vector(qv, resources[i].id, *ctx.index, ctx.embedding_top_n)};
    }
  }
  return assemble_ranking(request.query.id, std::move(entries), ranking_method(request.method), request.k,
                          request.filter_nonpositive);
}

}  // namespace fedbroker
