#pragma once

// Synthetic federation with a planted ground truth, shared by the unit tests
// and the acceptance binary.
//
// Every logged (query, resource) pair gets a planted relevance level; the
// mock judge answers that level for each of the pair's snippets. Every test
// query gets a distinct gain per resource; the mock selector's "yes" logit
// grows with that gain, so a correct selector reproduces the ideal order.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fedbroker/fedbroker.hpp"

namespace fedtest {

using namespace fedbroker;

struct FederationSpec {
  int resources = 10;
  int logged_queries = 20;
  int test_queries = 5;
  int snippets_per_pair = 10;
  std::uint64_t seed = 42;
};

struct Federation {
  Dataset dataset;
  std::map<std::pair<std::string, std::string>, int> planted_level;  // (query, resource)
  ResourceQrels test_gains;
  std::shared_ptr<MockBackend> backend;
};

inline std::string padded(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%02d", prefix, i);
  return buf;
}

inline const std::vector<std::string>& topic_words() {
  static const std::vector<std::string> words{
      "emu",     "habitat",  "volcano", "pasta",  "quantum", "guitar", "tax",    "glacier", "protein", "chess",
      "rainfall", "bitcoin", "opera",   "cricket", "vaccine", "sonnet", "kernel", "bridge",  "coral",   "tariff"};
  return words;
}

inline Federation make_federation(const FederationSpec& spec = {}) {
  Federation f;
  f.backend = std::make_shared<MockBackend>(spec.seed);
  std::mt19937_64 rng(spec.seed);
  const auto& words = topic_words();

  std::vector<Resource> resources;
  for (int r = 0; r < spec.resources; ++r) {
    std::string id = padded("r", r);
    resources.push_back({id, "Engine " + id, "https://" + id + ".example.org",
                         "Search engine about " + words[static_cast<std::size_t>(r) % words.size()], false});
  }
  f.dataset.registry = validate_registry(resources);

  std::vector<Query> logged;
  std::vector<Snippet> snippets;
  for (int q = 0; q < spec.logged_queries; ++q) {
    std::string qid = padded("L", q);
    logged.push_back({qid, words[static_cast<std::size_t>(q) % words.size()] + " " +
                               words[static_cast<std::size_t>(q * 7 + 3) % words.size()] + " facts",
                      QueryKind::AdHoc, QueryOrigin::Logged, std::nullopt});
    for (const auto& res : resources) {
      int level = static_cast<int>(rng() % 5);
      f.planted_level[{qid, res.id}] = level;
      std::string answer = "{\"M\": " + std::to_string(level) + ", \"T\": " + std::to_string(level) +
                           ",\"O\": " + std::to_string(level) + "}";
      f.backend->set_completions({TemplateId::Judging, res.id, qid, 0}, {answer});
      for (int k = 1; k <= spec.snippets_per_pair; ++k) {
        snippets.push_back({res.id, qid, k, res.name + " result " + std::to_string(k),
                            "Page " + std::to_string(k) + " about " + logged.back().text + " from " + res.name});
      }
    }
  }
  f.dataset.query_log = QueryLog(logged, snippets);

  for (int q = 0; q < spec.test_queries; ++q) {
    std::string qid = padded("T", q);
    f.dataset.test_queries.push_back({qid, "test question " + words[static_cast<std::size_t>(q + 5) % words.size()],
                                      QueryKind::AdHoc, QueryOrigin::Test, std::nullopt});
    std::vector<int> gains(resources.size());
    for (std::size_t i = 0; i < gains.size(); ++i) gains[i] = static_cast<int>(i) * (100 / spec.resources);
    std::shuffle(gains.begin(), gains.end(), rng);
    for (std::size_t i = 0; i < resources.size(); ++i) {
      f.test_gains[qid][resources[i].id] = gains[i];
      f.backend->set_logits({TemplateId::Selection, resources[i].id, qid, 0},
                            {{"yes", gains[i] / 20.0}, {"no", 0.0}});
    }
  }
  f.dataset.qrels = f.test_gains;
  return f;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fedbroker-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Softmax over the full vocabulary, computed directly from the logit table.
struct SoftmaxOracle {
  double p_yes = 0.0;
  double p_no = 0.0;
};

inline SoftmaxOracle softmax_oracle(const std::vector<std::string>& vocabulary,
                                    const std::map<std::string, double>& logits,
                                    const std::vector<std::string>& yes_set, const std::vector<std::string>& no_set) {
  auto logit = [&](const std::string& t) {
    auto it = logits.find(t);
    return it == logits.end() ? 0.0L : static_cast<long double>(it->second);
  };
  long double z = 0.0L;
  for (const auto& t : vocabulary) z += std::exp(logit(t));
  auto mass = [&](const std::vector<std::string>& set) {
    long double m = 0.0L;
    for (const auto& t : set) {
      if (std::find(vocabulary.begin(), vocabulary.end(), t) != vocabulary.end()) m += std::exp(logit(t)) / z;
    }
    return static_cast<double>(m);
  };
  return {mass(yes_set), mass(no_set)};
}

}  // namespace fedtest
