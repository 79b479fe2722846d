#pragma once

// Deterministic in-process backend. Responses are looked up in a scripted
// table keyed by (template, resource id, query id, snippet rank), with `*`
// wildcards for resource and query; unscripted keys fall back to values
// derived from a hash of the seed and the key.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fedbroker/hash.hpp"
#include "fedbroker/llm_client.hpp"

namespace fedbroker {

struct MockKey {
  TemplateId template_id = TemplateId::Selection;
  std::string resource_id = "*";
  std::string query_id = "*";
  int snippet_rank = 0;  // 0 matches any rank

  auto tie() const { return std::tie(template_id, resource_id, query_id, snippet_rank); }
  friend bool operator<(const MockKey& a, const MockKey& b) { return a.tie() < b.tie(); }
};

class MockBackend : public LlmBackend {
 public:
  static std::vector<std::string> default_vocabulary() {
    return {"yes", "no", "Yes", "No", " yes", " no", " Yes", " No", "the", "a", "maybe", "<eos>"};
  }

  explicit MockBackend(std::uint64_t seed = 0, std::vector<std::string> vocabulary = default_vocabulary())
      : seed_(seed), vocabulary_(std::move(vocabulary)) {
    if (vocabulary_.empty()) throw Error(ErrorCode::InvalidArgument, "mock vocabulary is empty");
  }

  /// Logits for the whole vocabulary; tokens not listed get logit 0.
  void set_logits(const MockKey& key, std::map<std::string, double> logits) {
    std::lock_guard lock(mu_);
    logits_[key] = std::move(logits);
  }

  /// Successive calls for the key return successive outputs; the last one repeats.
  void set_completions(const MockKey& key, std::vector<std::string> outputs) {
    if (outputs.empty()) throw Error(ErrorCode::InvalidArgument, "completion script is empty");
    std::lock_guard lock(mu_);
    completions_[key] = Script{std::move(outputs), {}};
  }

  void set_max_context(std::size_t words) {
    std::lock_guard lock(mu_);
    max_context_ = words;
  }
  void set_available(bool available) {
    std::lock_guard lock(mu_);
    available_ = available;
  }
  /// The next `n` calls fail with a transport error.
  void fail_next_calls(int n) {
    std::lock_guard lock(mu_);
    pending_failures_ = n;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  const std::vector<std::string>& vocabulary() const noexcept { return vocabulary_; }

  std::vector<double> next_token_logprobs(const RenderedPrompt& prompt,
                                          std::span<const std::string> candidates) override {
    std::lock_guard lock(mu_);
    admit(prompt);
    std::vector<double> logits = logits_for(prompt);
    double max_logit = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    double log_norm = max_logit + std::log(sum);

    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
      auto it = std::find(vocabulary_.begin(), vocabulary_.end(), c);
      out.push_back(it == vocabulary_.end() ? -std::numeric_limits<double>::infinity()
                                            : logits[static_cast<std::size_t>(it - vocabulary_.begin())] - log_norm);
    }
    return out;
  }

  GenerationResult generate(const RenderedPrompt& prompt, int max_tokens) override {
    std::lock_guard lock(mu_);
    admit(prompt);
    std::string text;
    if (auto* script = find_in(completions_, prompt)) {
      std::size_t i = std::min(script->cursor[call_key(prompt)]++, script->outputs.size() - 1);
      text = script->outputs[i];
    } else {
      text = default_completion(prompt);
    }
    return truncate_words(text, static_cast<std::size_t>(max_tokens));
  }

  /// Builds a mock from its JSON script (see README for the format).
  static std::shared_ptr<MockBackend> from_json(const Json& j) {
    auto vocab = j.contains("vocabulary") ? j.at("vocabulary").get<std::vector<std::string>>() : default_vocabulary();
    auto mock = std::make_shared<MockBackend>(j.value("seed", std::uint64_t{0}), std::move(vocab));
    if (j.contains("max_context")) mock->set_max_context(j.at("max_context").get<std::size_t>());
    if (j.contains("available")) mock->set_available(j.at("available").get<bool>());
    for (const auto& e : j.value("entries", Json::array())) {
      MockKey key{parse_template_id(detail::required<std::string>(e, "template")), e.value("resource_id", "*"),
                  e.value("query_id", "*"), e.value("snippet_rank", 0)};
      if (e.contains("logits")) mock->set_logits(key, e.at("logits").get<std::map<std::string, double>>());
      if (e.contains("completions")) mock->set_completions(key, e.at("completions").get<std::vector<std::string>>());
    }
    return mock;
  }

 private:
  struct Script {
    std::vector<std::string> outputs;
    std::map<std::string, std::size_t> cursor;
  };

  void admit(const RenderedPrompt& prompt) {
    ++calls_;
    if (!available_) throw Error(ErrorCode::TransportFailure, "mock backend is down");
    if (pending_failures_ > 0) {
      --pending_failures_;
      throw Error(ErrorCode::TransportFailure, "scripted transport failure");
    }
    std::size_t words = detail::count_words(prompt.text);
    if (words > max_context_)
      throw Error(ErrorCode::ContextOverflow,
                  std::to_string(words) + " tokens exceed window of " + std::to_string(max_context_));
  }

  template <typename V>
  V* find_in(std::map<MockKey, V>& table, const RenderedPrompt& p) {
    const auto& c = p.context;
    const MockKey probes[] = {
        {p.template_id, c.resource_id, c.query_id, c.snippet_rank}, {p.template_id, c.resource_id, c.query_id, 0},
        {p.template_id, c.resource_id, "*", c.snippet_rank},        {p.template_id, c.resource_id, "*", 0},
        {p.template_id, "*", c.query_id, c.snippet_rank},           {p.template_id, "*", c.query_id, 0},
        {p.template_id, "*", "*", 0},
    };
    for (const auto& k : probes) {
      auto it = table.find(k);
      if (it != table.end()) return &it->second;
    }
    return nullptr;
  }

  static std::string call_key(const RenderedPrompt& p) {
    return p.context.resource_id + '\x1f' + p.context.query_id + '\x1f' + std::to_string(p.context.snippet_rank) +
           '\x1f' + p.text;
  }

  std::uint64_t key_hash(const RenderedPrompt& p, std::string_view salt) const {
    std::uint64_t h = detail::fnv1a(to_string(p.template_id));
    h = detail::fnv1a(p.context.resource_id, h ^ 0x1f);
    h = detail::fnv1a(p.context.query_id, h ^ 0x2f);
    h = detail::fnv1a(std::to_string(p.context.snippet_rank), h ^ 0x3f);
    h = detail::fnv1a(salt, h);
    return detail::splitmix64(h ^ detail::splitmix64(seed_));
  }

  std::vector<double> logits_for(const RenderedPrompt& prompt) {
    std::vector<double> logits(vocabulary_.size(), 0.0);
    if (auto* scripted = find_in(logits_, prompt)) {
      for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        auto it = scripted->find(vocabulary_[i]);
        if (it != scripted->end()) logits[i] = it->second;
      }
      return logits;
    }
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
      if (vocabulary_[i] == "yes") logits[i] = 8.0 * detail::unit_from_hash(key_hash(prompt, "yes")) - 4.0;
      if (vocabulary_[i] == "no") logits[i] = 8.0 * detail::unit_from_hash(key_hash(prompt, "no")) - 4.0;
    }
    return logits;
  }

  std::string default_completion(const RenderedPrompt& prompt) const {
    switch (prompt.template_id) {
      case TemplateId::Judging: {
        std::uint64_t h = key_hash(prompt, "judge");
        int o = static_cast<int>(h % 5);
        int m = static_cast<int>((h >> 8) % 5);
        int t = static_cast<int>((h >> 16) % 5);
        std::ostringstream out;
        out << "{\"M\": " << m << ", \"T\": " << t << ",\"O\": " << o << "}";
        return out.str();
      }
      case TemplateId::QueryGen: {
        auto it = prompt.variable_bindings.find("query");
        std::string q = it == prompt.variable_bindings.end() ? std::string("the topic") : it->second;
        return "You are looking for information about " + q + ".";
      }
      case TemplateId::Selection:
        return "yes";
    }
    return {};
  }

  static GenerationResult truncate_words(const std::string& text, std::size_t max_words) {
    std::size_t words = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
      bool space = text[i] == ' ' || text[i] == '\n' || text[i] == '\t' || text[i] == '\r';
      if (!space && !in_word && ++words > max_words) {
        std::string head = text.substr(0, i);
        while (!head.empty() && (head.back() == ' ' || head.back() == '\n')) head.pop_back();
        return {head, false};
      }
      in_word = !space;
    }
    return {text, true};
  }

  std::uint64_t seed_;
  std::vector<std::string> vocabulary_;
  mutable std::mutex mu_;
  std::map<MockKey, std::map<std::string, double>> logits_;
  std::map<MockKey, Script> completions_;
  std::size_t max_context_ = 4096;
  bool available_ = true;
  int pending_failures_ = 0;
  std::size_t calls_ = 0;
};

}  // namespace fedbroker
