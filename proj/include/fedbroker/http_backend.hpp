#pragma once

// HTTP inference-server adapter. Two wire dialects are supported:
//
//   "fedbroker"  POST {prefix}/v1/next_token_logprobs
//                  {"model", "prompt", "candidates": [..]} -> {"logprobs": [number|null, ..]}
//                POST {prefix}/v1/generate
//                  {"model", "prompt", "max_tokens", "temperature": 0} -> {"text", "finished"}
//
//   "openai"     POST {prefix}/v1/completions (legacy completions API with
//                `logprobs` = top-n); candidates missing from the top-n list
//                are treated as probability 0.

#include <chrono>
#include <string>
#include <utility>

#include <httplib.h>

#include "fedbroker/llm_client.hpp"

namespace fedbroker {

enum class HttpDialect { Fedbroker, OpenAI };

inline HttpDialect parse_http_dialect(std::string_view s) {
  static constexpr std::pair<std::string_view, HttpDialect> table[] = {{"fedbroker", HttpDialect::Fedbroker},
                                                                       {"openai", HttpDialect::OpenAI}};
  return detail::parse_enum(s, table, "http dialect");
}

struct HttpBackendConfig {
  std::string endpoint;  // e.g. http://localhost:8000 or http://host:8000/prefix
  HttpDialect dialect = HttpDialect::Fedbroker;
  std::string model;
  int top_logprobs = 20;
  std::chrono::seconds timeout{60};
};

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix without trailing slash
};

inline Endpoint split_endpoint(std::string_view url) {
  auto scheme = url.find("://");
  if (scheme == std::string_view::npos) throw Error(ErrorCode::ConfigError, "endpoint lacks scheme: " + std::string(url));
  auto path = url.find('/', scheme + 3);
  Endpoint ep;
  ep.origin = std::string(url.substr(0, path));
  if (path != std::string_view::npos) {
    ep.prefix = std::string(url.substr(path));
    while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  }
  return ep;
}

class HttpBackend : public LlmBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)), endpoint_(split_endpoint(config_.endpoint)) {}

  std::vector<double> next_token_logprobs(const RenderedPrompt& prompt,
                                          std::span<const std::string> candidates) override {
    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> out(candidates.size(), neg_inf);
    if (config_.dialect == HttpDialect::Fedbroker) {
      Json body{{"model", config_.model}, {"prompt", prompt.text}, {"candidates", candidates}};
      Json reply = post("/v1/next_token_logprobs", body);
      const auto& lps = reply.at("logprobs");
      if (!lps.is_array() || lps.size() != candidates.size())
        throw Error(ErrorCode::TransportFailure, "malformed logprobs reply");
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (lps[i].is_number()) out[i] = lps[i].get<double>();
      }
      return out;
    }
    Json body{{"model", config_.model}, {"prompt", prompt.text}, {"max_tokens", 1},
              {"temperature", 0},       {"logprobs", config_.top_logprobs}};
    Json reply = post("/v1/completions", body);
    try {
      const auto& top = reply.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto it = top.find(candidates[i]);
        if (it != top.end() && it->is_number()) out[i] = it->get<double>();
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::TransportFailure, std::string("malformed completions reply: ") + e.what());
    }
    return out;
  }

  GenerationResult generate(const RenderedPrompt& prompt, int max_tokens) override {
    if (config_.dialect == HttpDialect::Fedbroker) {
      Json reply = post("/v1/generate", Json{{"model", config_.model},
                                             {"prompt", prompt.text},
                                             {"max_tokens", max_tokens},
                                             {"temperature", 0}});
      return {reply.value("text", ""), reply.value("finished", true)};
    }
    Json reply = post("/v1/completions", Json{{"model", config_.model},
                                              {"prompt", prompt.text},
                                              {"max_tokens", max_tokens},
                                              {"temperature", 0}});
    try {
      const auto& choice = reply.at("choices").at(0);
      return {choice.at("text").get<std::string>(), choice.value("finish_reason", "stop") == "stop"};
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::TransportFailure, std::string("malformed completions reply: ") + e.what());
    }
  }

 private:
  Json post(const std::string& path, const Json& body) {
    httplib::Client client(endpoint_.origin);
    auto secs = static_cast<time_t>(config_.timeout.count());
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    auto res = client.Post(endpoint_.prefix + path, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::TransportFailure, httplib::to_string(res.error()) + " (" + config_.endpoint + ")");
    if (res->status == 413 || (res->status == 400 && res->body.find("context") != std::string::npos))
      throw Error(ErrorCode::ContextOverflow, res->body);
    if (res->status >= 500) throw Error(ErrorCode::TransportFailure, "HTTP " + std::to_string(res->status));
    if (res->status != 200) throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::TransportFailure, std::string("unparseable reply: ") + e.what());
    }
  }

  HttpBackendConfig config_;
  Endpoint endpoint_;
};

}  // namespace fedbroker
