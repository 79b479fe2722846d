#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "support/federation.hpp"

using namespace fedbroker;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Empty;
}

std::vector<Judgment> with_levels(const std::vector<int>& levels) {
  std::vector<Judgment> out;
  for (std::size_t i = 0; i < levels.size(); ++i)
    out.push_back({"r", "q", static_cast<int>(i) + 1, levels[i], JudgmentSource::Synthetic, std::nullopt});
  return out;
}

std::string judge_json(int o) {
  return "{\"M\": " + std::to_string(o) + ", \"T\": " + std::to_string(o) + ",\"O\": " + std::to_string(o) + "}";
}

}  // namespace

TEST(ParseJudgment, ExampleOutput) {
  RawScores s = parse_judgment(R"({"M": 2, "T": 1,"O": 1})");
  EXPECT_EQ(s.M, 2);
  EXPECT_EQ(s.T, 1);
  EXPECT_EQ(s.O, 1);
  EXPECT_EQ(level_from(s), 1);
}

TEST(ParseJudgment, NoiseAroundObjectAndClamping) {
  RawScores s = parse_judgment(R"(noise {"M":4,"T":4,"O":7} noise)");
  EXPECT_EQ(level_from(s), 4);
  EXPECT_EQ(level_from(parse_judgment(R"({"M":0,"T":0,"O":-2})")), 0);
  EXPECT_EQ(level_from(parse_judgment("```json\n{\"M\": \"3\", \"T\": 2, \"O\": \"3\"}\n```")), 3);
}

TEST(ParseJudgment, ProseIsUnparseable) {
  EXPECT_EQ(code_of([] { parse_judgment("I think it is relevant."); }), ErrorCode::Unparseable);
  EXPECT_EQ(code_of([] { parse_judgment(R"({"M": 2, "T": 1})"); }), ErrorCode::Unparseable);
  EXPECT_EQ(code_of([] { parse_judgment(R"({"M": 2, "T": 1, "O": "high"})"); }), ErrorCode::Unparseable);
  EXPECT_EQ(code_of([] { parse_judgment("{\"O\": 1"); }), ErrorCode::Unparseable);
}

TEST(GradedPrecision, HandCases) {
  EXPECT_EQ(graded_precision(with_levels(std::vector<int>(10, 4))), 1.0);
  EXPECT_EQ(graded_precision(with_levels(std::vector<int>(10, 0))), 0.0);
  double gp = graded_precision(with_levels({1, 1, 2, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(gp, (0.25 + 0.25 + 0.5) / 10);
  EXPECT_EQ(gp, 0.10);
  EXPECT_EQ(graded_precision({}), 0.0);
  EXPECT_EQ(graded_precision(with_levels(std::vector<int>(15, 4))), 1.0);
  EXPECT_EQ(graded_precision(with_levels({3, 3, 3})), 0.3);
}

TEST(Aggregate, RoundHalfUpToPercent) {
  EXPECT_EQ(aggregate_resource_score(0.10), 10);
  EXPECT_EQ(aggregate_resource_score(1.0), 100);
  EXPECT_EQ(aggregate_resource_score(0.005), 1);
  EXPECT_EQ(aggregate_resource_score(0.175), 18);
  EXPECT_EQ(aggregate_resource_score(0.0), 0);
  EXPECT_EQ(aggregate_resource_score(0.244999), 24);
  EXPECT_EQ(code_of([] { aggregate_resource_score(1.2); }), ErrorCode::OutOfRange);
  EXPECT_EQ(code_of([] { aggregate_resource_score(-0.1); }), ErrorCode::OutOfRange);
}

TEST(Aggregate, EveryReachableGradedPrecisionMapsIntoRange) {
  // Ten judgments over five levels: every multiset of levels.
  for (int a = 0; a <= 10; ++a)
    for (int b = 0; a + b <= 10; ++b)
      for (int c = 0; a + b + c <= 10; ++c)
        for (int d = 0; a + b + c + d <= 10; ++d) {
          std::vector<int> levels;
          levels.insert(levels.end(), a, 1);
          levels.insert(levels.end(), b, 2);
          levels.insert(levels.end(), c, 3);
          levels.insert(levels.end(), d, 4);
          levels.resize(10, 0);
          int score = aggregate_resource_score(graded_precision(with_levels(levels)));
          int expected_quarters = a + 2 * b + 4 * c + 4 * d;  // 100 * gp = 2.5 * quarters
          EXPECT_EQ(score, (expected_quarters * 5 + 1) / 2);
        }
}

TEST(PseudoLabel, Boundaries) {
  EXPECT_EQ(pseudo_label(50), PseudoLabel::HighlyRelevant);
  EXPECT_EQ(pseudo_label(49), PseudoLabel::MarginallyRelevant);
  EXPECT_EQ(pseudo_label(25), PseudoLabel::MarginallyRelevant);
  EXPECT_EQ(pseudo_label(24), PseudoLabel::NotRelevant);
  EXPECT_EQ(pseudo_label(0), PseudoLabel::NotRelevant);
  EXPECT_EQ(pseudo_label(100), PseudoLabel::HighlyRelevant);
  EXPECT_EQ(code_of([] { pseudo_label(101); }), ErrorCode::OutOfRange);
  EXPECT_EQ(code_of([] { pseudo_label(-1); }), ErrorCode::OutOfRange);
}

TEST(PseudoLabel, TargetTable) {
  EXPECT_EQ(label_targets(PseudoLabel::HighlyRelevant), std::make_pair(Target::Yes, Target::Yes));
  EXPECT_EQ(label_targets(PseudoLabel::MarginallyRelevant), std::make_pair(Target::Yes, Target::No));
  EXPECT_EQ(label_targets(PseudoLabel::NotRelevant), std::make_pair(Target::No, Target::No));
}

TEST(Emission, PairSharesPromptAndGroup) {
  Resource r{"r1", "PubMed", "https://pubmed.ncbi.nlm.nih.gov", "Biomedical", false};
  Query q{"q1", "hobbit", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt};
  RepresentationConfig rc;
  rc.use_description = true;
  auto ex = emit_training_examples(PseudoLabel::MarginallyRelevant, r, q, rc);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].group_id, "q1::r1");
  EXPECT_EQ(ex[0].prompt_text, ex[1].prompt_text);
  EXPECT_NE(ex[0].prompt_text.find("Description: Biomedical"), std::string::npos);
  auto back = training_example_from_json(Json::parse(to_json_value(ex[1]).dump()));
  EXPECT_EQ(back.target, Target::No);
  EXPECT_EQ(back.prompt_text, ex[1].prompt_text);
}

TEST(Pipeline, TwoExamplesPerPair) {
  fedtest::Federation f = fedtest::make_federation({10, 4, 0, 10, 21});
  LlmClient client(f.backend);
  SlatResult r = run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, SlatConfig{});
  EXPECT_EQ(r.dataset.size(), 80u);
  EXPECT_EQ(r.scores.size(), 40u);
  EXPECT_EQ(r.judging.judgments.size(), 400u);
  EXPECT_TRUE(r.judging.failures.empty());
  EXPECT_TRUE(r.judging.skipped.empty());
}

TEST(Pipeline, AllNavigationalResourceIsHighlyRelevantEverywhere) {
  fedtest::Federation f = fedtest::make_federation({5, 6, 0, 10, 2});
  auto backend = std::make_shared<MockBackend>(8);
  backend->set_completions({TemplateId::Judging, "r03"}, {judge_json(4)});
  LlmClient client(backend);
  SlatResult r = run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, SlatConfig{});
  int seen = 0;
  for (const auto& s : r.scores) {
    if (s.resource_id != "r03") continue;
    ++seen;
    EXPECT_EQ(s.score, 100);
    EXPECT_EQ(pseudo_label(s.score), PseudoLabel::HighlyRelevant);
  }
  EXPECT_EQ(seen, 6);
  for (const auto& ex : r.dataset) {
    if (ex.group_id.ends_with("::r03")) EXPECT_EQ(ex.target, Target::Yes);
  }
}

TEST(Pipeline, PairsWithoutSnippetsAreSkippedAndLogged) {
  std::vector<Query> qs{{"L1", "emu", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt},
                        {"L2", "tax", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt}};
  std::vector<Snippet> ss{{"a", "L1", 1, "t", "emu page"}, {"b", "L1", 1, "t", "emu page"}, {"a", "L2", 1, "t", "tax"}};
  auto reg = validate_registry({{"a", "A", "https://a", std::nullopt, false}, {"b", "B", "https://b", std::nullopt, false}});
  LlmClient client(std::make_shared<MockBackend>(4));
  fedtest::TempDir dir;
  SlatResult r = run_slat_pipeline(QueryLog(qs, ss), reg, client, SlatConfig{}, dir.path());
  ASSERT_EQ(r.judging.skipped.size(), 1u);
  EXPECT_EQ(r.judging.skipped[0], (SkippedPair{"L2", "b"}));
  EXPECT_EQ(r.dataset.size(), 6u);
  EXPECT_EQ(read_file(dir / "skipped_pairs.jsonl"), "{\"query_id\":\"L2\",\"resource_id\":\"b\"}\n");
}

TEST(Pipeline, ReplayIsByteIdentical) {
  fedtest::TempDir a, b;
  for (const auto* dir : {&a, &b}) {
    fedtest::Federation f = fedtest::make_federation({6, 5, 0, 4, 13});
    LlmClientConfig cc;
    cc.concurrency = dir == &a ? 1 : 8;
    LlmClient client(std::make_shared<MockBackend>(99), cc);
    run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, SlatConfig{}, dir->path());
  }
  for (const char* name : {"judgments.jsonl", "judge_failures.jsonl", "skipped_pairs.jsonl", "resource_scores.jsonl",
                           "slat_dataset.jsonl"}) {
    EXPECT_EQ(read_file(a / name), read_file(b / name)) << name;
  }
}

TEST(Pipeline, SnippetRepresentationNeedsSampler) {
  fedtest::Federation f = fedtest::make_federation({3, 3, 0, 3, 1});
  LlmClient client(f.backend);
  SlatConfig sc;
  sc.representation.use_similar_snippets = true;
  EXPECT_EQ(code_of([&] { run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, sc); }),
            ErrorCode::InvalidArgument);

  HashingEncoder enc(64, 5);
  EmbeddingIndex index = build_embedding_index(f.dataset.query_log, f.dataset.registry, enc);
  SimilarSnippetSampler sampler(index, f.dataset.query_log, enc);
  SlatResult r = run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, sc, std::nullopt, &sampler);
  ASSERT_EQ(r.dataset.size(), 18u);
  for (const auto& ex : r.dataset) EXPECT_NE(ex.prompt_text.find("Snippets:\nSnippet 1: "), std::string::npos);
}

TEST(Judging, UnparseableOutputIsRetriedOnceThenZero) {
  Query q{"L1", "emu", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt};
  auto backend = std::make_shared<MockBackend>();
  backend->set_completions({TemplateId::Judging, "a", "L1", 1}, {"no idea", judge_json(3)});
  backend->set_completions({TemplateId::Judging, "a", "L1", 2}, {"still prose"});
  LlmClient client(backend);
  SlatConfig sc;

  std::optional<JudgeFailure> failure;
  Judgment ok = judge_snippet(client, q, {"a", "L1", 1, "t", "body"}, sc, failure);
  EXPECT_EQ(ok.level, 3);
  EXPECT_FALSE(failure);

  Judgment bad = judge_snippet(client, q, {"a", "L1", 2, "t", "body"}, sc, failure);
  EXPECT_EQ(bad.level, 0);
  EXPECT_FALSE(bad.raw_scores);
  ASSERT_TRUE(failure);
  EXPECT_EQ(failure->snippet_rank, 2);

  failure.reset();
  Judgment empty = judge_snippet(client, q, {"a", "L1", 3, "t", " "}, sc, failure);
  EXPECT_EQ(empty.level, 0);
  ASSERT_TRUE(failure);
  EXPECT_EQ(failure->reason, "empty snippet");
}

TEST(Judging, OnlyTopCutoffSnippetsAreJudged) {
  fedtest::Federation f = fedtest::make_federation({2, 2, 0, 12, 6});
  LlmClient client(f.backend);
  SlatConfig sc;
  JudgingOutput out = judge_query_log(f.dataset.query_log, f.dataset.registry, client, sc);
  EXPECT_EQ(out.judgments.size(), 2u * 2u * 10u);
  for (const auto& j : out.judgments) EXPECT_LE(j.snippet_rank, 10);
}

TEST(Aggregation, GroupsByQueryAndResource) {
  std::vector<Judgment> js;
  for (int i = 1; i <= 10; ++i) js.push_back({"b", "q", i, i <= 2 ? 4 : 0, JudgmentSource::Synthetic, std::nullopt});
  for (int i = 1; i <= 10; ++i) js.push_back({"a", "q", i, 2, JudgmentSource::Synthetic, std::nullopt});
  auto scores = aggregate_scores(js);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].resource_id, "a");
  EXPECT_EQ(scores[0].score, 50);
  EXPECT_EQ(scores[1].score, 20);
}

TEST(Conversational, DeterministicChoiceOfThreeNavigationalSnippets) {
  Query adhoc{"L7", "tolkien hobbit", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt};
  std::vector<std::pair<Snippet, Judgment>> judged;
  for (int i = 1; i <= 8; ++i) {
    Snippet s{"r" + std::to_string(i % 3), "L7", i, "Title " + std::to_string(i), "Body " + std::to_string(i)};
    int level = i <= 5 ? 4 : 2;
    judged.push_back({s, {s.resource_id, "L7", i, level, JudgmentSource::Synthetic, std::nullopt}});
  }
  auto run = [&](std::uint64_t seed) {
    auto backend = std::make_shared<MockBackend>();
    LlmClient client(backend);
    Query g = generate_conversational_query(adhoc, judged, client, seed);
    return std::make_pair(g, backend->call_count());
  };
  auto [g1, calls] = run(11);
  auto [g2, calls2] = run(11);
  EXPECT_EQ(calls, 1u);
  EXPECT_EQ(g1, g2);
  EXPECT_EQ(g1.origin, QueryOrigin::Generated);
  EXPECT_EQ(g1.kind, QueryKind::Conversational);
  EXPECT_EQ(g1.source_query_id, std::optional<std::string>("L7"));
  EXPECT_EQ(g1.id, "L7-conv");

  std::vector<Snippet> nav;
  for (const auto& [s, j] : judged)
    if (j.level == 4) nav.push_back(s);
  std::sort(nav.begin(), nav.end(), [](const Snippet& a, const Snippet& b) {
    return std::tie(a.resource_id, a.rank) < std::tie(b.resource_id, b.rank);
  });
  auto chosen = seeded_sample(nav, 3, 11 ^ detail::fnv1a("L7"));
  auto prompt = build_querygen_prompt(adhoc, chosen);
  auto backend = std::make_shared<MockBackend>();
  backend->set_completions({TemplateId::QueryGen}, {"You want the 1937 first edition."});
  LlmClient client(backend);
  Query fixed = generate_conversational_query(adhoc, judged, client, 11);
  EXPECT_EQ(fixed.text, "You want the 1937 first edition.");
  EXPECT_NE(prompt.text.find(chosen[0].title), std::string::npos);
}

TEST(Conversational, SeedsSelectDifferentSnippetSets) {
  std::vector<Snippet> items;
  for (int i = 1; i <= 10; ++i) items.push_back({"r", "q", i, "", "b"});
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto pick = seeded_sample(items, 3, seed);
    ASSERT_EQ(pick.size(), 3u);
    std::vector<int> ranks;
    for (const auto& s : pick) ranks.push_back(s.rank);
    std::set<int> distinct(ranks.begin(), ranks.end());
    EXPECT_EQ(distinct.size(), 3u);
    seen.insert(ranks);
  }
  EXPECT_GT(seen.size(), 10u);
}

TEST(Conversational, TooFewNavigationalSnippets) {
  Query adhoc{"L1", "emu", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt};
  std::vector<std::pair<Snippet, Judgment>> judged;
  for (int i = 1; i <= 4; ++i) {
    Snippet s{"r", "L1", i, "t", "b"};
    judged.push_back({s, {"r", "L1", i, i <= 2 ? 4 : 3, JudgmentSource::Synthetic, std::nullopt}});
  }
  LlmClient client(std::make_shared<MockBackend>());
  EXPECT_EQ(code_of([&] { generate_conversational_query(adhoc, judged, client, 1); }),
            ErrorCode::InsufficientNavigationalSnippets);
}

TEST(Conversational, BlankGenerationIsAnError) {
  Query adhoc{"L1", "emu", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt};
  std::vector<std::pair<Snippet, Judgment>> judged;
  for (int i = 1; i <= 3; ++i) {
    Snippet s{"r", "L1", i, "t", "b"};
    judged.push_back({s, {"r", "L1", i, 4, JudgmentSource::Synthetic, std::nullopt}});
  }
  auto backend = std::make_shared<MockBackend>();
  backend->set_completions({TemplateId::QueryGen}, {"   "});
  LlmClient client(backend);
  EXPECT_EQ(code_of([&] { generate_conversational_query(adhoc, judged, client, 1); }), ErrorCode::EmptyGeneration);
}

TEST(TrainingData, GeneratedQueriesInheritSourceLabels) {
  auto reg = validate_registry({{"a", "A", "https://a", std::nullopt, false}, {"b", "B", "https://b", std::nullopt, false}});
  std::vector<ResourceRelevanceScore> scores{{"a", "L1", 80}, {"b", "L1", 30}};
  std::vector<Query> queries{{"L1", "emu", QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt},
                             {"L1-conv", "I want to know where emus live", QueryKind::Conversational,
                              QueryOrigin::Generated, "L1"}};
  auto ds = make_training_data(scores, reg, queries, SlatConfig{});
  ASSERT_EQ(ds.size(), 8u);
  std::map<std::string, std::vector<Target>> by_group;
  for (const auto& ex : ds) by_group[ex.group_id].push_back(ex.target);
  EXPECT_EQ(by_group["L1-conv::a"], by_group["L1::a"]);
  EXPECT_EQ(by_group["L1-conv::b"], (std::vector<Target>{Target::Yes, Target::No}));
  for (const auto& ex : ds) {
    if (ex.group_id.starts_with("L1-conv")) EXPECT_NE(ex.prompt_text.find("where emus live"), std::string::npos);
  }
}

// The fine-tuning side reads exactly this format; the file under
// tests/golden is shared with it. Set FEDBROKER_UPDATE_GOLDEN=1 to refresh.
TEST(TrainingData, GoldenDatasetFile) {
  fedtest::Federation f = fedtest::make_federation({2, 2, 0, 2, 3});
  LlmClient client(f.backend);
  fedtest::TempDir dir;
  run_slat_pipeline(f.dataset.query_log, f.dataset.registry, client, SlatConfig{}, dir.path());
  std::string produced = read_file(dir / "slat_dataset.jsonl");
  std::filesystem::path golden = std::filesystem::path(FEDBROKER_SOURCE_DIR) / "tests/golden/slat_dataset.jsonl";
  if (const char* update = std::getenv("FEDBROKER_UPDATE_GOLDEN"); update && std::string(update) == "1")
    write_atomic(golden, produced);
  ASSERT_TRUE(std::filesystem::exists(golden));
  EXPECT_EQ(produced, read_file(golden));
  auto parsed = read_jsonl(golden, training_example_from_json);
  EXPECT_EQ(parsed.size(), 8u);
}
