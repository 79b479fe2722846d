#pragma once

// Resource-ranking evaluation: nDCG@k and nP@k against per-resource gains on
// the 0-100 scale, and Cohen's kappa for judge agreement.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedbroker/error.hpp"
#include "fedbroker/model.hpp"

namespace fedbroker {

/// query id -> resource id -> gain. Absent resources have gain 0.
using ResourceQrels = std::map<std::string, std::map<std::string, int>>;

inline int gain_of(const std::map<std::string, int>& gains, const std::string& resource_id) {
  auto it = gains.find(resource_id);
  return it == gains.end() ? 0 : it->second;
}

inline std::vector<int> ideal_gains(const std::map<std::string, int>& gains) {
  std::vector<int> out;
  out.reserve(gains.size());
  for (const auto& [rid, g] : gains) out.push_back(g);
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

inline double dcg(std::span<const int> gains_in_rank_order, int k) {
  double sum = 0.0;
  std::size_t n = std::min(gains_in_rank_order.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) sum += gains_in_rank_order[i] / std::log2(static_cast<double>(i) + 2.0);
  return sum;
}

inline std::vector<int> ranked_gains(const ResourceRanking& ranking, const std::map<std::string, int>& gains) {
  std::vector<int> out;
  out.reserve(ranking.entries.size());
  for (const auto& e : ranking.entries) out.push_back(gain_of(gains, e.resource_id));
  return out;
}

inline const std::map<std::string, int>& gains_for(const ResourceQrels& qrels, const std::string& query_id) {
  static const std::map<std::string, int> empty;
  auto it = qrels.find(query_id);
  return it == qrels.end() ? empty : it->second;
}

inline double ndcg_at_k(const ResourceRanking& ranking, const ResourceQrels& qrels, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto& gains = gains_for(qrels, ranking.query_id);
  double ideal = dcg(ideal_gains(gains), k);
  if (ideal <= 0.0) return 0.0;
  return dcg(ranked_gains(ranking, gains), k) / ideal;
}

/// Sum of the top-k selected gains over the sum of the k largest gains.
inline double np_at_k(const ResourceRanking& ranking, const ResourceQrels& qrels, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto& gains = gains_for(qrels, ranking.query_id);
  auto top_sum = [k](const std::vector<int>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size() && i < static_cast<std::size_t>(k); ++i) s += g[i];
    return s;
  };
  double ideal = top_sum(ideal_gains(gains));
  if (ideal <= 0.0) return 0.0;
  return top_sum(ranked_gains(ranking, gains)) / ideal;
}

inline double cohen_kappa(std::span<const int> labels_a, std::span<const int> labels_b) {
  if (labels_a.size() != labels_b.size())
    throw Error(ErrorCode::LengthMismatch, std::to_string(labels_a.size()) + " vs " + std::to_string(labels_b.size()));
  if (labels_a.empty()) throw Error(ErrorCode::Empty, "no labels");
  const double n = static_cast<double>(labels_a.size());
  double agree = 0.0, a_pos = 0.0, b_pos = 0.0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    bool a = labels_a[i] != 0;
    bool b = labels_b[i] != 0;
    agree += (a == b) ? 1.0 : 0.0;
    a_pos += a ? 1.0 : 0.0;
    b_pos += b ? 1.0 : 0.0;
  }
  double p_o = agree / n;
  double p_e = (a_pos / n) * (b_pos / n) + (1.0 - a_pos / n) * (1.0 - b_pos / n);
  if (p_e >= 1.0) return 1.0;  // both raters constant and equal
  return (p_o - p_e) / (1.0 - p_e);
}

/// Navigational, key and highly relevant count as relevant (1); relevant and
/// non-relevant as 0.
inline std::vector<int> binarize_judgments(std::span<const Judgment> judgments) {
  std::vector<int> out;
  out.reserve(judgments.size());
  for (const auto& j : judgments) out.push_back(j.level >= static_cast<int>(RelevanceLevel::HighlyRelevant) ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------
// Run-level report

struct MetricCut {
  std::string name;
  bool ndcg;  // false: nP
  int k;
};

inline const std::vector<MetricCut>& metric_cuts() {
  static const std::vector<MetricCut> cuts{
      {"ndcg@10", true, 10}, {"ndcg@20", true, 20}, {"ndcg@100", true, 100}, {"nP@1", false, 1}, {"nP@5", false, 5}};
  return cuts;
}

struct MetricReport {
  std::map<std::string, std::map<std::string, double>> per_query;  // query -> metric -> value
  std::map<std::string, double> mean;
};

inline MetricReport evaluate_run(std::span<const ResourceRanking> rankings, const ResourceQrels& qrels) {
  MetricReport report;
  for (const auto& r : rankings) {
    if (!qrels.contains(r.query_id)) throw Error(ErrorCode::MissingQrels, r.query_id);
    auto& row = report.per_query[r.query_id];
    for (const auto& cut : metric_cuts()) row[cut.name] = cut.ndcg ? ndcg_at_k(r, qrels, cut.k) : np_at_k(r, qrels, cut.k);
  }
  for (const auto& cut : metric_cuts()) {
    double sum = 0.0;
    for (const auto& [qid, row] : report.per_query) sum += row.at(cut.name);
    report.mean[cut.name] = report.per_query.empty() ? 0.0 : sum / static_cast<double>(report.per_query.size());
  }
  return report;
}

inline OrderedJson to_json_value(const MetricReport& report) {
  OrderedJson j;
  OrderedJson mean;
  for (const auto& cut : metric_cuts()) mean[cut.name] = report.mean.at(cut.name);
  j["mean"] = std::move(mean);
  OrderedJson per_query = OrderedJson::object();
  for (const auto& [qid, row] : report.per_query) {
    OrderedJson q;
    for (const auto& cut : metric_cuts()) q[cut.name] = row.at(cut.name);
    per_query[qid] = std::move(q);
  }
  j["per_query"] = std::move(per_query);
  j["num_queries"] = report.per_query.size();
  return j;
}

inline std::string format_table(const MetricReport& report) {
  std::ostringstream out;
  std::size_t width = 5;
  for (const auto& [qid, row] : report.per_query) width = std::max(width, qid.size());
  out << std::left << std::setw(static_cast<int>(width)) << "query";
  for (const auto& cut : metric_cuts()) out << "  " << std::right << std::setw(8) << cut.name;
  out << '\n' << std::fixed << std::setprecision(4);
  auto row_out = [&](const std::string& label, const std::map<std::string, double>& row) {
    out << std::left << std::setw(static_cast<int>(width)) << label;
    for (const auto& cut : metric_cuts()) out << "  " << std::right << std::setw(8) << row.at(cut.name);
    out << '\n';
  };
  for (const auto& [qid, row] : report.per_query) row_out(qid, row);
  row_out("mean", report.mean);
  return out.str();
}

inline std::string format_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "query";
  for (const auto& cut : metric_cuts()) out << ',' << cut.name;
  out << '\n' << std::setprecision(10);
  auto row_out = [&](const std::string& label, const std::map<std::string, double>& row) {
    out << label;
    for (const auto& cut : metric_cuts()) out << ',' << row.at(cut.name);
    out << '\n';
  };
  for (const auto& [qid, row] : report.per_query) row_out(qid, row);
  row_out("mean", report.mean);
  return out.str();
}

/// One line per (query, resource): {"query_id", "resource_id", "gain"}. A
/// "score" field is accepted in place of "gain" so resource_scores.jsonl can
/// serve as qrels directly.
inline void add_qrel_record(ResourceQrels& qrels, const Json& j) {
  std::string qid = detail::required<std::string>(j, "query_id");
  std::string rid = detail::required<std::string>(j, "resource_id");
  int gain = j.contains("gain") ? detail::required<int>(j, "gain") : detail::required<int>(j, "score");
  if (gain < 0 || gain > 100) throw Error(ErrorCode::OutOfRange, "gain " + std::to_string(gain) + " outside [0,100]");
  qrels[qid][rid] = gain;
}

inline std::vector<OrderedJson> qrels_records(const ResourceQrels& qrels) {
  std::vector<OrderedJson> out;
  for (const auto& [qid, gains] : qrels) {
    for (const auto& [rid, g] : gains) out.push_back(OrderedJson{{"query_id", qid}, {"resource_id", rid}, {"gain", g}});
  }
  return out;
}

}  // namespace fedbroker
