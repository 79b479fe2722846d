#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <semaphore>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include "fedbroker/error.hpp"
#include "fedbroker/prompting.hpp"

namespace fedbroker {

namespace detail {
inline std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}
}  // namespace detail

/// First-token probabilities of the yes-set and no-set under a softmax over
/// the whole vocabulary, so p_yes + p_no may be below 1.
struct TokenChoiceScore {
  double p_yes = 0.0;
  double p_no = 0.0;
};

struct GenerationResult {
  std::string text;
  bool finished = true;
};

/// A concrete inference server or simulator. Implementations throw
/// `Error(TransportFailure)` for retryable transport problems and
/// `Error(ContextOverflow)` when the prompt does not fit.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;

  /// Log-probability of each candidate being the first generated token.
  /// Candidates unknown to the backend get -infinity.
  virtual std::vector<double> next_token_logprobs(const RenderedPrompt& prompt,
                                                  std::span<const std::string> candidates) = 0;

  /// Greedy continuation of at most `max_tokens` tokens.
  virtual GenerationResult generate(const RenderedPrompt& prompt, int max_tokens) = 0;
};

struct LlmClientConfig {
  std::vector<std::string> yes_variants{"yes", "Yes", " yes", " Yes"};
  std::vector<std::string> no_variants{"no", "No", " no", " No"};
  int concurrency = 4;
  int retries = 1;
  // Prompts longer than this many whitespace-separated words are rejected
  // before they reach the backend. 0 disables the check.
  std::size_t max_context_words = 0;
};

inline constexpr std::ptrdiff_t kMaxClientConcurrency = 1024;

/// Backend-agnostic entry point. Shareable across threads; at most
/// `concurrency` requests are in flight at once.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<LlmBackend> backend, LlmClientConfig config = {})
      : backend_(std::move(backend)),
        config_(std::move(config)),
        slots_(std::clamp<std::ptrdiff_t>(config_.concurrency, 1, kMaxClientConcurrency)) {
    if (!backend_) throw Error(ErrorCode::InvalidArgument, "LLM client needs a backend");
    if (config_.yes_variants.empty() || config_.no_variants.empty())
      throw Error(ErrorCode::InvalidArgument, "yes/no variant sets must be non-empty");
  }

  LlmClient(const LlmClient&) = delete;
  LlmClient& operator=(const LlmClient&) = delete;

  const LlmClientConfig& config() const noexcept { return config_; }
  int concurrency() const noexcept { return static_cast<int>(std::clamp<std::ptrdiff_t>(config_.concurrency, 1, kMaxClientConcurrency)); }

  TokenChoiceScore score_yes_no(const RenderedPrompt& prompt) {
    if (prompt.template_id != TemplateId::Selection)
      throw Error(ErrorCode::InvalidArgument, "yes/no scoring requires a selection prompt");
    std::vector<std::string> candidates = config_.yes_variants;
    candidates.insert(candidates.end(), config_.no_variants.begin(), config_.no_variants.end());
    auto logprobs = with_retry(prompt, [&] { return backend_->next_token_logprobs(prompt, candidates); });
    if (logprobs.size() != candidates.size())
      throw Error(ErrorCode::BackendUnavailable, "backend returned a malformed logprob vector");

    TokenChoiceScore score;
    const std::size_t n_yes = config_.yes_variants.size();
    for (std::size_t i = 0; i < logprobs.size(); ++i) {
      double p = std::isfinite(logprobs[i]) ? std::exp(logprobs[i]) : 0.0;
      (i < n_yes ? score.p_yes : score.p_no) += p;
    }
    return score;
  }

  GenerationResult generate(const RenderedPrompt& prompt, int max_tokens) {
    if (max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
    return with_retry(prompt, [&] { return backend_->generate(prompt, max_tokens); });
  }

 private:
  class SlotGuard {
   public:
    explicit SlotGuard(std::counting_semaphore<kMaxClientConcurrency>& s) : s_(s) { s_.acquire(); }
    ~SlotGuard() { s_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

   private:
    std::counting_semaphore<kMaxClientConcurrency>& s_;
  };

  template <typename F>
  std::invoke_result_t<F> with_retry(const RenderedPrompt& prompt, F&& call) {
    if (config_.max_context_words > 0) {
      std::size_t words = detail::count_words(prompt.text);
      if (words > config_.max_context_words)
        throw Error(ErrorCode::ContextOverflow, std::to_string(words) + " words exceed window of " +
                                                    std::to_string(config_.max_context_words));
    }
    SlotGuard guard(slots_);
    for (int attempt = 0;; ++attempt) {
      try {
        return call();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::TransportFailure && e.code() != ErrorCode::Timeout) throw;
        if (attempt >= config_.retries) throw Error(ErrorCode::BackendUnavailable, e.what());
      }
    }
  }

  std::shared_ptr<LlmBackend> backend_;
  LlmClientConfig config_;
  std::counting_semaphore<kMaxClientConcurrency> slots_;
};

}  // namespace fedbroker
