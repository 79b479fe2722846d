#pragma once

// fedbroker.toml loading and backend construction.
//
//   [backend]        kind = "mock" | "http", endpoint, dialect, model,
//                    max_context, concurrency, retries, timeout_s,
//                    yes_variants, no_variants, mock_script, mock_seed
//   [representation] description, snippets, snippet_count
//   [slat]           cutoff, judge_max_tokens, weights = {non, rel, hrel, key, nav},
//                    thresholds = {high, marginal}
//   [embedding]      dim, seed, top_n
//   [service]        host, port, request_timeout_s, max_inflight, report_elapsed
//   templates_dir    optional directory overriding the compiled-in prompts
//
// FEDBROKER_LLM_ENDPOINT overrides backend.endpoint; FEDBROKER_DATA_DIR
// supplies the data directory when none is given on the command line.

#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "fedbroker/embedding.hpp"
#include "fedbroker/http_backend.hpp"
#include "fedbroker/io.hpp"
#include "fedbroker/mock_backend.hpp"
#include "fedbroker/slat.hpp"

namespace fedbroker {

struct BackendConfig {
  std::string kind = "mock";
  std::string endpoint;
  HttpDialect dialect = HttpDialect::Fedbroker;
  std::string model;
  std::size_t max_context = 0;
  int concurrency = 4;
  int retries = 1;
  int timeout_s = 60;
  std::vector<std::string> yes_variants{"yes", "Yes", " yes", " Yes"};
  std::vector<std::string> no_variants{"no", "No", " no", " No"};
  std::string mock_script;
  std::uint64_t mock_seed = 0;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int request_timeout_s = 120;
  int max_inflight = 8;
  bool report_elapsed = true;
};

struct EmbeddingConfig {
  std::size_t dim = 1024;
  std::uint64_t seed = 0;
  std::size_t top_n = 3;
};

struct BrokerConfig {
  BackendConfig backend;
  RepresentationConfig representation;
  GradedWeights weights;
  LabelThresholds thresholds;
  int cutoff = 10;
  int judge_max_tokens = 64;
  EmbeddingConfig embedding;
  ServiceConfig service;
  std::string templates_dir;

  SlatConfig slat(const TemplateSet* templates) const {
    SlatConfig c;
    c.representation = representation;
    c.weights = weights;
    c.thresholds = thresholds;
    c.cutoff = cutoff;
    c.judge_max_tokens = judge_max_tokens;
    c.templates = templates;
    return c;
  }
};

namespace detail {
template <typename T>
void read_into(const toml::table& t, std::string_view key, T& out) {
  const toml::node* node = t.get(key);
  if (!node) return;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value<bool>()) { out = *v; return; }
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node->value<std::int64_t>()) {
      if (*v < 0 && std::is_unsigned_v<T>) throw Error(ErrorCode::ConfigError, std::string(key) + " must be non-negative");
      out = static_cast<T>(*v);
      return;
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (auto v = node->value<double>()) { out = static_cast<T>(*v); return; }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value<std::string>()) { out = *v; return; }
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    if (const auto* arr = node->as_array()) {
      out.clear();
      for (const auto& el : *arr) {
        auto v = el.value<std::string>();
        if (!v) throw Error(ErrorCode::ConfigError, std::string(key) + " must be an array of strings");
        out.push_back(*v);
      }
      return;
    }
  }
  throw Error(ErrorCode::ConfigError, "config key '" + std::string(key) + "' has the wrong type");
}

inline const toml::table* section(const toml::table& root, std::string_view name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) throw Error(ErrorCode::ConfigError, "[" + std::string(name) + "] must be a table");
  return n->as_table();
}
}  // namespace detail

inline BrokerConfig parse_config(std::string_view toml_text, std::string_view source = "fedbroker.toml") {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string(e.description()));
  }
  BrokerConfig c;
  detail::read_into(root, "templates_dir", c.templates_dir);
  if (const auto* b = detail::section(root, "backend")) {
    detail::read_into(*b, "kind", c.backend.kind);
    detail::read_into(*b, "endpoint", c.backend.endpoint);
    std::string dialect;
    detail::read_into(*b, "dialect", dialect);
    if (!dialect.empty()) c.backend.dialect = parse_http_dialect(dialect);
    detail::read_into(*b, "model", c.backend.model);
    detail::read_into(*b, "max_context", c.backend.max_context);
    detail::read_into(*b, "concurrency", c.backend.concurrency);
    detail::read_into(*b, "retries", c.backend.retries);
    detail::read_into(*b, "timeout_s", c.backend.timeout_s);
    detail::read_into(*b, "yes_variants", c.backend.yes_variants);
    detail::read_into(*b, "no_variants", c.backend.no_variants);
    detail::read_into(*b, "mock_script", c.backend.mock_script);
    detail::read_into(*b, "mock_seed", c.backend.mock_seed);
  }
  if (const auto* r = detail::section(root, "representation")) {
    detail::read_into(*r, "description", c.representation.use_description);
    detail::read_into(*r, "snippets", c.representation.use_similar_snippets);
    detail::read_into(*r, "snippet_count", c.representation.snippet_count);
  }
  if (const auto* s = detail::section(root, "slat")) {
    detail::read_into(*s, "cutoff", c.cutoff);
    detail::read_into(*s, "judge_max_tokens", c.judge_max_tokens);
    if (const auto* w = detail::section(*s, "weights")) {
      detail::read_into(*w, "non", c.weights.non_relevant);
      detail::read_into(*w, "rel", c.weights.relevant);
      detail::read_into(*w, "hrel", c.weights.highly_relevant);
      detail::read_into(*w, "key", c.weights.key);
      detail::read_into(*w, "nav", c.weights.navigational);
    }
    if (const auto* t = detail::section(*s, "thresholds")) {
      detail::read_into(*t, "high", c.thresholds.high);
      detail::read_into(*t, "marginal", c.thresholds.marginal);
    }
  }
  if (const auto* e = detail::section(root, "embedding")) {
    detail::read_into(*e, "dim", c.embedding.dim);
    detail::read_into(*e, "seed", c.embedding.seed);
    detail::read_into(*e, "top_n", c.embedding.top_n);
  }
  if (const auto* s = detail::section(root, "service")) {
    detail::read_into(*s, "host", c.service.host);
    detail::read_into(*s, "port", c.service.port);
    detail::read_into(*s, "request_timeout_s", c.service.request_timeout_s);
    detail::read_into(*s, "max_inflight", c.service.max_inflight);
    detail::read_into(*s, "report_elapsed", c.service.report_elapsed);
  }
  c.representation.validate();
  c.weights.validate();
  c.thresholds.validate();
  if (c.backend.kind != "mock" && c.backend.kind != "http")
    throw Error(ErrorCode::ConfigError, "backend.kind must be \"mock\" or \"http\"");
  return c;
}

/// Reads `path` when given, otherwise defaults; then applies environment overrides.
inline BrokerConfig load_config(const std::optional<fs::path>& path) {
  BrokerConfig c = path ? parse_config(read_file(*path), path->string()) : BrokerConfig{};
  if (const char* ep = std::getenv("FEDBROKER_LLM_ENDPOINT"); ep && *ep) {
    c.backend.endpoint = ep;
    if (!path) c.backend.kind = "http";
  }
  return c;
}

inline std::shared_ptr<LlmBackend> make_backend(const BackendConfig& b) {
  if (b.kind == "http") {
    if (b.endpoint.empty())
      throw Error(ErrorCode::ConfigError, "http backend needs an endpoint (backend.endpoint or FEDBROKER_LLM_ENDPOINT)");
    return std::make_shared<HttpBackend>(
        HttpBackendConfig{b.endpoint, b.dialect, b.model, 20, std::chrono::seconds(b.timeout_s)});
  }
  if (!b.mock_script.empty()) {
    try {
      return MockBackend::from_json(Json::parse(read_file(b.mock_script)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, "mock script " + b.mock_script + ": " + e.what());
    }
  }
  return std::make_shared<MockBackend>(b.mock_seed);
}

inline std::shared_ptr<LlmClient> make_client(const BackendConfig& b) {
  LlmClientConfig cc;
  cc.yes_variants = b.yes_variants;
  cc.no_variants = b.no_variants;
  cc.concurrency = b.concurrency;
  cc.retries = b.retries;
  cc.max_context_words = b.max_context;
  return std::make_shared<LlmClient>(make_backend(b), std::move(cc));
}

}  // namespace fedbroker
