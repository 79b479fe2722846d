#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support/federation.hpp"

using namespace fedbroker;

namespace {

ResourceRanking ranking_of(const std::string& qid, const std::vector<std::string>& ids) {
  ResourceRanking r{qid, {}, RankingMethod::Oracle};
  for (std::size_t i = 0; i < ids.size(); ++i) r.entries.push_back({ids[i], -static_cast<double>(i)});
  return r;
}

double dcg_oracle(const std::vector<int>& gains, int k) {
  long double sum = 0;
  for (int i = 0; i < k && i < static_cast<int>(gains.size()); ++i)
    sum += gains[static_cast<std::size_t>(i)] / (std::log(static_cast<long double>(i) + 2) / std::log(2.0L));
  return static_cast<double>(sum);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Empty;
}

}  // namespace

TEST(Ndcg, IdealOrderScoresOne) {
  ResourceQrels q{{"q", {{"a", 100}, {"b", 60}, {"c", 20}, {"d", 0}}}};
  for (int k : {1, 2, 3, 4, 10}) EXPECT_NEAR(ndcg_at_k(ranking_of("q", {"a", "b", "c", "d"}), q, k), 1.0, 1e-15);
}

TEST(Ndcg, NoRelevantResourcesScoresZero) {
  ResourceQrels q{{"q", {{"a", 0}, {"b", 0}}}};
  EXPECT_EQ(ndcg_at_k(ranking_of("q", {"a", "b"}), q, 10), 0.0);
  ResourceQrels some{{"q", {{"z", 40}}}};
  EXPECT_EQ(ndcg_at_k(ranking_of("q", {"a", "b"}), some, 10), 0.0);
}

TEST(Ndcg, HandComputedExample) {
  ResourceQrels q{{"q", {{"a", 10}, {"b", 0}, {"c", 5}}}};
  double expected = (10.0 + 5.0 / 2.0) / (10.0 + 5.0 / std::log2(3.0));
  double got = ndcg_at_k(ranking_of("q", {"a", "b", "c"}), q, 3);
  EXPECT_NEAR(got, expected, 1e-15);
  EXPECT_NEAR(got, 0.9502, 5e-5);
}

TEST(Ndcg, IdealUsesResourcesMissingFromTheRanking) {
  ResourceQrels q{{"q", {{"a", 50}, {"hidden", 100}}}};
  EXPECT_NEAR(ndcg_at_k(ranking_of("q", {"a"}), q, 10), 50.0 / (100.0 + 50.0 / std::log2(3.0)), 1e-15);
}

TEST(Ndcg, MatchesOracleOnShuffledRankings) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    int n = 1 + static_cast<int>(rng() % 15);
    ResourceQrels q;
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) {
      ids.push_back(fedtest::padded("r", i));
      q["q"][ids.back()] = static_cast<int>(rng() % 101);
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<int> ranked, ideal;
    for (const auto& id : ids) ranked.push_back(q["q"][id]);
    ideal = ranked;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    int k = 1 + static_cast<int>(rng() % 20);
    double id = dcg_oracle(ideal, k);
    double expected = id > 0 ? dcg_oracle(ranked, k) / id : 0.0;
    EXPECT_NEAR(ndcg_at_k(ranking_of("q", ids), q, k), expected, 1e-12);
  }
}

TEST(Ndcg, SwappingEqualGainsChangesNothing) {
  ResourceQrels q{{"q", {{"a", 30}, {"b", 30}, {"c", 70}, {"d", 0}}}};
  double x = ndcg_at_k(ranking_of("q", {"c", "a", "d", "b"}), q, 4);
  double y = ndcg_at_k(ranking_of("q", {"c", "b", "d", "a"}), q, 4);
  EXPECT_EQ(x, y);
}

TEST(NormalizedPrecision, HandComputedExamples) {
  ResourceQrels q{{"q", {{"x", 100}, {"y", 0}, {"z", 80}}}};
  EXPECT_NEAR(np_at_k(ranking_of("q", {"x", "y"}), q, 2), 100.0 / 180.0, 1e-15);
  EXPECT_NEAR(np_at_k(ranking_of("q", {"z", "x"}), q, 1), 0.8, 1e-15);
  EXPECT_NEAR(np_at_k(ranking_of("q", {"z", "x"}), q, 2), 1.0, 1e-15);
  ResourceQrels half{{"q", {{"a", 50}, {"b", 100}}}};
  EXPECT_NEAR(np_at_k(ranking_of("q", {"a", "b"}), half, 1), 0.5, 1e-15);
  ResourceQrels none{{"q", {{"a", 0}}}};
  EXPECT_EQ(np_at_k(ranking_of("q", {"a"}), none, 5), 0.0);
}

TEST(NormalizedPrecision, ShortRankingIsPenalised) {
  ResourceQrels q{{"q", {{"a", 60}, {"b", 40}}}};
  EXPECT_NEAR(np_at_k(ranking_of("q", {"a"}), q, 5), 0.6, 1e-15);
}

TEST(Metrics, RejectNonPositiveK) {
  ResourceQrels q{{"q", {{"a", 1}}}};
  EXPECT_EQ(code_of([&] { ndcg_at_k(ranking_of("q", {"a"}), q, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { np_at_k(ranking_of("q", {"a"}), q, -1); }), ErrorCode::InvalidArgument);
}

TEST(Kappa, AgreementLevels) {
  std::vector<int> a{1, 1, 0, 0}, b{1, 0, 1, 0}, c{1, 1, 0, 1};
  EXPECT_EQ(cohen_kappa(a, a), 1.0);
  EXPECT_NEAR(cohen_kappa(a, b), 0.0, 1e-15);
  // p_o = 0.75, p_e = 0.5*0.75 + 0.5*0.25 = 0.5.
  EXPECT_NEAR(cohen_kappa(a, c), 0.5, 1e-15);
  EXPECT_EQ(cohen_kappa(c, a), cohen_kappa(a, c));
  std::vector<int> opposite{0, 0, 1, 1};
  EXPECT_NEAR(cohen_kappa(a, opposite), -1.0, 1e-15);
  std::vector<int> ones{1, 1, 1};
  EXPECT_EQ(cohen_kappa(ones, ones), 1.0);
}

TEST(Kappa, SymmetricOnRandomLabels) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> a(1 + rng() % 30), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int>(rng() % 2);
      b[i] = static_cast<int>(rng() % 2);
    }
    double k = cohen_kappa(a, b);
    EXPECT_EQ(k, cohen_kappa(b, a));
    EXPECT_LE(k, 1.0);
    EXPECT_GE(k, -1.0);
  }
}

TEST(Kappa, InvalidInput) {
  std::vector<int> a{1, 0}, b{1};
  EXPECT_EQ(code_of([&] { cohen_kappa(a, b); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([&] { cohen_kappa(std::vector<int>{}, std::vector<int>{}); }), ErrorCode::Empty);
}

TEST(Binarize, HighlyRelevantAndAboveIsRelevant) {
  std::vector<Judgment> js;
  for (int level : {4, 3, 2, 1, 0}) js.push_back({"r", "q", 1, level, JudgmentSource::Imported, std::nullopt});
  EXPECT_EQ(binarize_judgments(js), (std::vector<int>{1, 1, 1, 0, 0}));
}

TEST(EvaluateRun, MeansAndMissingQrels) {
  ResourceQrels q{{"q1", {{"a", 100}, {"b", 50}}}, {"q2", {{"a", 50}, {"b", 100}}}};
  std::vector<ResourceRanking> run{ranking_of("q1", {"a", "b"}), ranking_of("q2", {"a", "b"})};
  MetricReport report = evaluate_run(run, q);
  EXPECT_EQ(report.per_query.size(), 2u);
  EXPECT_NEAR(report.per_query["q1"]["nP@1"], 1.0, 1e-15);
  EXPECT_NEAR(report.per_query["q2"]["nP@1"], 0.5, 1e-15);
  EXPECT_NEAR(report.mean["nP@1"], 0.75, 1e-15);
  std::vector<std::string> names;
  for (const auto& [name, v] : report.mean) names.push_back(name);
  EXPECT_EQ(names, (std::vector<std::string>{"nP@1", "nP@5", "ndcg@10", "ndcg@100", "ndcg@20"}));

  run.push_back(ranking_of("q3", {"a"}));
  EXPECT_EQ(code_of([&] { evaluate_run(run, q); }), ErrorCode::MissingQrels);
}

TEST(EvaluateRun, Formats) {
  ResourceQrels q{{"q1", {{"a", 100}, {"b", 50}}}};
  std::vector<ResourceRanking> run{ranking_of("q1", {"b", "a"})};
  MetricReport report = evaluate_run(run, q);
  OrderedJson j = to_json_value(report);
  EXPECT_EQ(j["num_queries"], 1);
  EXPECT_NEAR(j["mean"]["nP@1"].get<double>(), 0.5, 1e-15);
  EXPECT_EQ(j["mean"].begin().key(), "ndcg@10");

  std::string csv = format_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "query,ndcg@10,ndcg@20,ndcg@100,nP@1,nP@5");
  EXPECT_NE(csv.find("\nq1,"), std::string::npos);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);

  std::string table = format_table(report);
  EXPECT_NE(table.find("0.5000"), std::string::npos);
  EXPECT_NE(table.find("mean"), std::string::npos);
}

TEST(Qrels, RecordsRoundTripAndAcceptScoreField) {
  ResourceQrels q;
  add_qrel_record(q, Json::parse(R"({"query_id":"q","resource_id":"a","gain":40})"));
  add_qrel_record(q, Json::parse(R"({"query_id":"q","resource_id":"b","score":70})"));
  EXPECT_EQ(q["q"]["a"], 40);
  EXPECT_EQ(q["q"]["b"], 70);
  ResourceQrels back;
  for (const auto& rec : qrels_records(q)) add_qrel_record(back, Json::parse(rec.dump()));
  EXPECT_EQ(back, q);
  EXPECT_EQ(code_of([&] { add_qrel_record(q, Json::parse(R"({"query_id":"q","resource_id":"a","gain":101})")); }),
            ErrorCode::OutOfRange);
}
