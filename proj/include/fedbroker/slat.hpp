#pragma once

// Synthetic label pipeline over a query log:
//
//   judge      every logged (query, snippet) pair on the 0-4 scale with the LLM
//   aggregate  per (query, resource): graded precision of the top 10, scaled
//              to an integer in [0, 100]
//   label      score -> HighlyRelevant / MarginallyRelevant / NotRelevant
//   emit       two yes/no instruction examples per pair, sharing one prompt
//
// plus conversational query generation from navigational snippets.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedbroker/embedding.hpp"
#include "fedbroker/hash.hpp"
#include "fedbroker/io.hpp"
#include "fedbroker/llm_client.hpp"
#include "fedbroker/model.hpp"
#include "fedbroker/parallel.hpp"
#include "fedbroker/prompting.hpp"

namespace fedbroker {

struct GradedWeights {
  double non_relevant = 0.0;
  double relevant = 0.25;
  double highly_relevant = 0.5;
  double key = 1.0;
  double navigational = 1.0;

  void validate() const {
    bool monotone = non_relevant == 0.0 && non_relevant <= relevant && relevant <= highly_relevant &&
                    highly_relevant <= key && key == 1.0 && navigational == 1.0;
    if (!monotone) throw Error(ErrorCode::InvalidArgument, "graded weights must satisfy 0 = non <= rel <= hrel <= key = nav = 1");
  }

  double weight(int level) const {
    switch (clamp_level(level)) {
      case 0: return non_relevant;
      case 1: return relevant;
      case 2: return highly_relevant;
      case 3: return key;
      default: return navigational;
    }
  }
};

/// Interval boundaries on the 0-100 resource score: [high, 100] is highly
/// relevant, [marginal, high) marginally relevant, [0, marginal) not relevant.
struct LabelThresholds {
  int high = 50;
  int marginal = 25;

  void validate() const {
    if (!(0 <= marginal && marginal <= high && high <= 100))
      throw Error(ErrorCode::InvalidArgument, "label thresholds must satisfy 0 <= marginal <= high <= 100");
  }
};

enum class PseudoLabel { HighlyRelevant, MarginallyRelevant, NotRelevant };

inline std::string_view to_string(PseudoLabel l) {
  switch (l) {
    case PseudoLabel::HighlyRelevant: return "highly_relevant";
    case PseudoLabel::MarginallyRelevant: return "marginally_relevant";
    case PseudoLabel::NotRelevant: return "not_relevant";
  }
  return "not_relevant";
}

enum class Target { Yes, No };

inline std::string_view to_string(Target t) { return t == Target::Yes ? "yes" : "no"; }

struct ResourceRelevanceScore {
  std::string resource_id;
  std::string query_id;
  int score = 0;

  friend bool operator==(const ResourceRelevanceScore&, const ResourceRelevanceScore&) = default;
};

struct TrainingExample {
  std::string group_id;
  std::string prompt_text;
  Target target = Target::No;

  friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

inline OrderedJson to_json_value(const ResourceRelevanceScore& s) {
  return OrderedJson{{"resource_id", s.resource_id}, {"query_id", s.query_id}, {"score", s.score}};
}

inline ResourceRelevanceScore score_from_json(const Json& j) {
  ResourceRelevanceScore s{detail::required<std::string>(j, "resource_id"), detail::required<std::string>(j, "query_id"),
                           detail::required<int>(j, "score")};
  if (s.score < 0 || s.score > 100) throw Error(ErrorCode::OutOfRange, "resource score outside [0,100]");
  return s;
}

inline OrderedJson to_json_value(const TrainingExample& e) {
  return OrderedJson{{"group_id", e.group_id}, {"prompt_text", e.prompt_text}, {"target", to_string(e.target)}};
}

inline TrainingExample training_example_from_json(const Json& j) {
  auto target = detail::required<std::string>(j, "target");
  if (target != "yes" && target != "no") throw Error(ErrorCode::ParseError, "target must be \"yes\" or \"no\"");
  return {detail::required<std::string>(j, "group_id"), detail::required<std::string>(j, "prompt_text"),
          target == "yes" ? Target::Yes : Target::No};
}

// ---------------------------------------------------------------------------
// Judging output

namespace detail {
inline std::optional<int> as_int(const Json& v) {
  auto narrow = [](long long x) { return static_cast<int>(std::clamp<long long>(x, -1000000, 1000000)); };
  if (v.is_number_integer()) return narrow(v.get<long long>());
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d) return narrow(static_cast<long long>(std::clamp(d, -1e6, 1e6)));
    return std::nullopt;
  }
  if (v.is_string()) {
    Json inner = Json::parse(trim(v.get_ref<const std::string&>()), nullptr, false);
    if (!inner.is_discarded() && inner.is_number()) return as_int(inner);
  }
  return std::nullopt;
}

/// End of the balanced {...} starting at `open`, honoring JSON strings.
inline std::size_t match_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::string_view::npos;
}
}  // namespace detail

/// Extracts the first JSON object carrying integer M, T and O from a judge's
/// output, tolerating surrounding text. Numeric strings are accepted.
inline RawScores parse_judgment(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    std::size_t close = detail::match_brace(raw, open);
    if (close == std::string_view::npos) continue;
    Json obj = Json::parse(raw.substr(open, close - open + 1), nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) continue;
    auto get = [&](const char* k) -> std::optional<int> {
      auto it = obj.find(k);
      return it == obj.end() ? std::nullopt : detail::as_int(*it);
    };
    auto m = get("M"), t = get("T"), o = get("O");
    if (m && t && o) return RawScores{*m, *t, *o};
  }
  throw Error(ErrorCode::Unparseable, std::string(raw.substr(0, 200)));
}

inline int level_from(const RawScores& s) { return clamp_level(s.O); }

// ---------------------------------------------------------------------------
// Aggregation

/// Sum of level weights over the first `cutoff` judgments, divided by
/// `cutoff`. Absent ranks count as weight 0.
inline double graded_precision(std::span<const Judgment> judgments, int cutoff = 10, const GradedWeights& weights = {}) {
  if (cutoff < 1) throw Error(ErrorCode::InvalidArgument, "cutoff must be >= 1");
  double sum = 0.0;
  std::size_t n = std::min(judgments.size(), static_cast<std::size_t>(cutoff));
  for (std::size_t i = 0; i < n; ++i) sum += weights.weight(judgments[i].level);
  return sum / static_cast<double>(cutoff);
}

/// round-half-up(100 * gp). The epsilon absorbs binary representation error
/// so that, e.g., 0.175 maps to 18.
inline int aggregate_resource_score(double gp) {
  constexpr double kTolerance = 1e-9;
  if (!(gp >= -kTolerance && gp <= 1.0 + kTolerance))
    throw Error(ErrorCode::OutOfRange, "graded precision " + std::to_string(gp) + " outside [0,1]");
  int score = static_cast<int>(std::floor(100.0 * gp + 0.5 + kTolerance));
  return std::clamp(score, 0, 100);
}

inline PseudoLabel pseudo_label(int score, const LabelThresholds& thresholds = {}) {
  if (score < 0 || score > 100) throw Error(ErrorCode::OutOfRange, "score " + std::to_string(score) + " outside [0,100]");
  if (score >= thresholds.high) return PseudoLabel::HighlyRelevant;
  if (score >= thresholds.marginal) return PseudoLabel::MarginallyRelevant;
  return PseudoLabel::NotRelevant;
}

inline std::pair<Target, Target> label_targets(PseudoLabel label) {
  switch (label) {
    case PseudoLabel::HighlyRelevant: return {Target::Yes, Target::Yes};
    case PseudoLabel::MarginallyRelevant: return {Target::Yes, Target::No};
    case PseudoLabel::NotRelevant: return {Target::No, Target::No};
  }
  return {Target::No, Target::No};
}

inline std::string group_id_for(std::string_view query_id, std::string_view resource_id) {
  return std::string(query_id) + "::" + std::string(resource_id);
}

inline std::vector<TrainingExample> emit_training_examples(PseudoLabel label, const Resource& resource, const Query& query,
                                                           const RepresentationConfig& config,
                                                           std::span<const Snippet> similar_snippets = {},
                                                           const TemplateSet& templates = TemplateSet::builtin()) {
  RenderedPrompt prompt = build_selection_prompt(resource, query, similar_snippets, config, templates);
  auto [first, second] = label_targets(label);
  std::string group = group_id_for(query.id, resource.id);
  return {TrainingExample{group, prompt.text, first}, TrainingExample{group, prompt.text, second}};
}

// ---------------------------------------------------------------------------
// Pipeline

struct SlatConfig {
  RepresentationConfig representation;
  GradedWeights weights;
  LabelThresholds thresholds;
  int cutoff = 10;
  int judge_max_tokens = 64;
  const TemplateSet* templates = &TemplateSet::builtin();
};

/// A judgment that fell back to level 0 after a failed retry.
struct JudgeFailure {
  std::string query_id;
  std::string resource_id;
  int snippet_rank = 0;
  std::string reason;

  friend bool operator==(const JudgeFailure&, const JudgeFailure&) = default;
};

inline OrderedJson to_json_value(const JudgeFailure& f) {
  return OrderedJson{{"query_id", f.query_id}, {"resource_id", f.resource_id}, {"snippet_rank", f.snippet_rank},
                     {"reason", f.reason}};
}

struct SkippedPair {
  std::string query_id;
  std::string resource_id;

  friend bool operator==(const SkippedPair&, const SkippedPair&) = default;
};

inline OrderedJson to_json_value(const SkippedPair& p) {
  return OrderedJson{{"query_id", p.query_id}, {"resource_id", p.resource_id}};
}

struct JudgingOutput {
  std::vector<Judgment> judgments;  // sorted by (query, resource, rank)
  std::vector<JudgeFailure> failures;
  std::vector<SkippedPair> skipped;
};

/// Judges one snippet: one regeneration on unparseable output, then level 0
/// with a failure record.
inline Judgment judge_snippet(LlmClient& client, const Query& query, const Snippet& snippet, const SlatConfig& config,
                              std::optional<JudgeFailure>& failure) {
  Judgment j{snippet.resource_id, query.id, snippet.rank, 0, JudgmentSource::Synthetic, std::nullopt};
  RenderedPrompt prompt;
  try {
    prompt = build_judging_prompt(query, snippet, *config.templates);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptySnippet) throw;
    failure = JudgeFailure{query.id, snippet.resource_id, snippet.rank, "empty snippet"};
    return j;
  }
  std::string last_output;
  for (int attempt = 0; attempt < 2; ++attempt) {
    last_output = client.generate(prompt, config.judge_max_tokens).text;
    try {
      RawScores raw = parse_judgment(last_output);
      j.raw_scores = raw;
      j.level = level_from(raw);
      return j;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Unparseable) throw;
    }
  }
  failure = JudgeFailure{query.id, snippet.resource_id, snippet.rank, "unparseable: " + last_output.substr(0, 200)};
  return j;
}

/// Judges every logged snippet of every (query, resource) pair. `prompt_queries`
/// optionally replaces the query text shown to the judge (keyed by logged
/// query id); the judgment keeps the replacement query's id.
inline JudgingOutput judge_query_log(const QueryLog& log, const ResourceRegistry& registry, LlmClient& client,
                                     const SlatConfig& config,
                                     const std::map<std::string, Query>* prompt_queries = nullptr) {
  struct Task {
    const Query* query;
    const Snippet* snippet;
  };
  JudgingOutput out;
  std::vector<Task> tasks;
  for (const auto& q : log.queries()) {
    const Query* shown = &q;
    if (prompt_queries) {
      auto it = prompt_queries->find(q.id);
      if (it == prompt_queries->end()) continue;
      shown = &it->second;
    }
    for (const auto& r : registry.resources()) {
      auto group = log.group(q.id, r.id);
      if (group.empty()) {
        out.skipped.push_back({shown->id, r.id});
        continue;
      }
      for (std::size_t i = 0; i < group.size() && i < static_cast<std::size_t>(config.cutoff); ++i)
        tasks.push_back({shown, &group[i]});
    }
  }

  std::vector<Judgment> judgments(tasks.size());
  std::vector<std::optional<JudgeFailure>> failures(tasks.size());
  parallel_for(tasks.size(), client.concurrency(), [&](std::size_t i) {
    judgments[i] = judge_snippet(client, *tasks[i].query, *tasks[i].snippet, config, failures[i]);
  });
  out.judgments = std::move(judgments);
  for (auto& f : failures) {
    if (f) out.failures.push_back(std::move(*f));
  }
  std::sort(out.judgments.begin(), out.judgments.end(), [](const Judgment& a, const Judgment& b) {
    return std::tie(a.query_id, a.resource_id, a.snippet_rank) < std::tie(b.query_id, b.resource_id, b.snippet_rank);
  });
  return out;
}

/// Graded precision per (query, resource) group of judgments, scaled to 0-100.
/// Output is sorted by (query, resource).
inline std::vector<ResourceRelevanceScore> aggregate_scores(std::vector<Judgment> judgments, const SlatConfig& config = {}) {
  config.weights.validate();
  std::sort(judgments.begin(), judgments.end(), [](const Judgment& a, const Judgment& b) {
    return std::tie(a.query_id, a.resource_id, a.snippet_rank) < std::tie(b.query_id, b.resource_id, b.snippet_rank);
  });
  std::vector<ResourceRelevanceScore> out;
  for (std::size_t i = 0; i < judgments.size();) {
    std::size_t j = i;
    while (j < judgments.size() && judgments[j].query_id == judgments[i].query_id &&
           judgments[j].resource_id == judgments[i].resource_id) {
      validate(judgments[j]);
      ++j;
    }
    std::span<const Judgment> group(judgments.data() + i, j - i);
    double gp = graded_precision(group, config.cutoff, config.weights);
    out.push_back({judgments[i].resource_id, judgments[i].query_id, aggregate_resource_score(gp)});
    i = j;
  }
  return out;
}

/// Two examples per scored pair. A Generated query takes the labels of its
/// source logged query, with its own text in the prompt.
inline std::vector<TrainingExample> make_training_data(const std::vector<ResourceRelevanceScore>& scores,
                                                       const ResourceRegistry& registry,
                                                       const std::vector<Query>& queries, const SlatConfig& config,
                                                       const SimilarSnippetSampler* sampler = nullptr) {
  config.thresholds.validate();
  std::map<std::pair<std::string, std::string>, int> by_pair;
  for (const auto& s : scores) by_pair[{s.query_id, s.resource_id}] = s.score;

  std::vector<const Query*> ordered;
  for (const auto& q : queries) ordered.push_back(&q);
  std::sort(ordered.begin(), ordered.end(), [](const Query* a, const Query* b) { return a->id < b->id; });

  std::vector<TrainingExample> dataset;
  for (const Query* q : ordered) {
    const std::string& label_query = q->origin == QueryOrigin::Generated && q->source_query_id ? *q->source_query_id : q->id;
    for (const auto& r : registry.resources()) {
      auto it = by_pair.find({label_query, r.id});
      if (it == by_pair.end()) continue;
      std::vector<Snippet> similar;
      if (config.representation.use_similar_snippets) {
        if (!sampler) throw Error(ErrorCode::InvalidArgument, "snippet representation needs a snippet sampler");
        similar = sampler->sample(*q, r.id, static_cast<std::size_t>(config.representation.snippet_count), label_query);
      }
      auto pair = emit_training_examples(pseudo_label(it->second, config.thresholds), r, *q, config.representation,
                                         similar, *config.templates);
      dataset.insert(dataset.end(), pair.begin(), pair.end());
    }
  }
  return dataset;
}

struct SlatResult {
  JudgingOutput judging;
  std::vector<ResourceRelevanceScore> scores;
  std::vector<TrainingExample> dataset;
  std::map<std::string, ManifestEntry> artifacts;
};

/// Runs judge -> aggregate -> label -> emit over the whole log. When
/// `output_dir` is given, every intermediate is persisted there.
inline SlatResult run_slat_pipeline(const QueryLog& log, const ResourceRegistry& registry, LlmClient& client,
                                    const SlatConfig& config, const std::optional<fs::path>& output_dir = std::nullopt,
                                    const SimilarSnippetSampler* sampler = nullptr) {
  config.weights.validate();
  config.thresholds.validate();
  config.representation.validate();
  SlatResult result;
  result.judging = judge_query_log(log, registry, client, config);
  result.scores = aggregate_scores(result.judging.judgments, config);
  result.dataset = make_training_data(result.scores, registry, log.queries(), config, sampler);
  if (output_dir) {
    result.artifacts["judgments"] = write_jsonl(*output_dir / "judgments.jsonl", result.judging.judgments);
    result.artifacts["judge_failures"] = write_jsonl(*output_dir / "judge_failures.jsonl", result.judging.failures);
    result.artifacts["skipped_pairs"] = write_jsonl(*output_dir / "skipped_pairs.jsonl", result.judging.skipped);
    result.artifacts["resource_scores"] = write_jsonl(*output_dir / "resource_scores.jsonl", result.scores);
    result.artifacts["slat_dataset"] = write_jsonl(*output_dir / "slat_dataset.jsonl", result.dataset);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Conversational query generation

/// Draws `count` distinct items with a seeded partial Fisher-Yates shuffle.
/// Uses raw splitmix64 draws so the choice is identical on every platform.
template <typename T>
std::vector<T> seeded_sample(std::vector<T> items, std::size_t count, std::uint64_t seed) {
  std::uint64_t state = detail::splitmix64(seed);
  count = std::min(count, items.size());
  for (std::size_t i = 0; i < count; ++i) {
    state = detail::splitmix64(state);
    std::size_t j = i + static_cast<std::size_t>(state % (items.size() - i));
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

inline Query generate_conversational_query(const Query& adhoc, std::span<const std::pair<Snippet, Judgment>> judged,
                                           LlmClient& client, std::uint64_t seed, int max_tokens = 256,
                                           const TemplateSet& templates = TemplateSet::builtin()) {
  std::vector<Snippet> navigational;
  for (const auto& [snippet, judgment] : judged) {
    if (judgment.level == static_cast<int>(RelevanceLevel::Navigational)) navigational.push_back(snippet);
  }
  if (navigational.size() < kQueryGenSnippetCount)
    throw Error(ErrorCode::InsufficientNavigationalSnippets,
                adhoc.id + " has " + std::to_string(navigational.size()) + " navigational snippets");
  std::sort(navigational.begin(), navigational.end(), [](const Snippet& a, const Snippet& b) {
    return std::tie(a.resource_id, a.rank) < std::tie(b.resource_id, b.rank);
  });
  auto chosen = seeded_sample(std::move(navigational), kQueryGenSnippetCount, seed ^ detail::fnv1a(adhoc.id));

  RenderedPrompt prompt = build_querygen_prompt(adhoc, chosen, templates);
  GenerationResult gen = client.generate(prompt, max_tokens);
  std::string text(trim(gen.text));
  if (text.empty()) throw Error(ErrorCode::EmptyGeneration, "no description generated for '" + adhoc.id + "'");
  return Query{adhoc.id + "-conv", std::move(text), QueryKind::Conversational, QueryOrigin::Generated, adhoc.id};
}

}  // namespace fedbroker
