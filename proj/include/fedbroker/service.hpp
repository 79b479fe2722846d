#pragma once

// HTTP selection service for RAG pipelines.
//
//   POST /select     {"query": str, "k"?: int, "method"?: "resllm"|"embedding",
//                     "representation"?: {"description": bool, "snippets": bool},
//                     "filter"?: bool}
//   GET  /resources  registry listing
//   GET  /healthz    liveness
//
// Handlers are plain functions of the request body so they can be exercised
// without a socket; `bind` attaches them to an httplib server.

#include <atomic>
#include <chrono>
#include <future>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include "fedbroker/config.hpp"
#include "fedbroker/embedding.hpp"
#include "fedbroker/io.hpp"
#include "fedbroker/selector.hpp"

namespace fedbroker {

struct ServiceState {
  ResourceRegistry registry;
  std::shared_ptr<LlmClient> client;
  std::shared_ptr<const QueryLog> query_log;
  std::shared_ptr<const EmbeddingIndex> index;
  Encoder encoder;
  std::shared_ptr<const SimilarSnippetSampler> sampler;
  std::shared_ptr<const TemplateSet> templates;
  RepresentationConfig default_representation;
  ServiceConfig config;
  std::size_t embedding_top_n = 3;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

struct SelectResponseEntry {
  std::string resource_id;
  std::string name;
  std::string url;
  double score = 0.0;
};

struct SelectResponse {
  std::string query_id;
  std::string method;
  std::vector<SelectResponseEntry> entries;
  long long elapsed_ms = 0;
};

inline OrderedJson to_json_value(const SelectResponse& r) {
  OrderedJson entries = OrderedJson::array();
  for (const auto& e : r.entries)
    entries.push_back(OrderedJson{{"resource_id", e.resource_id}, {"name", e.name}, {"url", e.url}, {"score", e.score}});
  return OrderedJson{{"query_id", r.query_id}, {"method", r.method}, {"entries", std::move(entries)},
                     {"elapsed_ms", r.elapsed_ms}};
}

inline HttpReply error_reply(int status, std::string_view message) {
  return {status, OrderedJson{{"error", message}}.dump()};
}

inline int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError: return 400;
    case ErrorCode::BackendUnavailable:
    case ErrorCode::TransportFailure: return 503;
    case ErrorCode::Timeout: return 504;
    case ErrorCode::AllFiltered:
    case ErrorCode::MissingDescription:
    case ErrorCode::MissingSnippets:
    case ErrorCode::ContextOverflow: return 422;
    default: return 500;
  }
}

/// Parses a /select body into a request; throws Error(InvalidArgument) on any
/// malformed field.
inline SelectionRequest parse_select_request(std::string_view body, const RepresentationConfig& defaults,
                                             std::size_t registry_size) {
  Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
  auto q = j.find("query");
  if (q == j.end() || !q->is_string() || trim(q->get_ref<const std::string&>()).empty())
    throw Error(ErrorCode::InvalidArgument, "\"query\" must be a non-empty string");

  SelectionRequest req;
  const std::string& text = q->get_ref<const std::string&>();
  req.query = Query{"http-" + sha256_hex(text).substr(0, 16), text, QueryKind::AdHoc, QueryOrigin::Test, std::nullopt};
  req.representation = defaults;
  if (auto k = j.find("k"); k != j.end() && !k->is_null()) {
    if (!k->is_number_integer() || k->get<long long>() < 1 || static_cast<std::size_t>(k->get<long long>()) > registry_size)
      throw Error(ErrorCode::InvalidArgument, "\"k\" must be an integer in [1, " + std::to_string(registry_size) + "]");
    req.k = k->get<int>();
  }
  if (auto m = j.find("method"); m != j.end() && !m->is_null()) {
    if (!m->is_string()) throw Error(ErrorCode::InvalidArgument, "\"method\" must be a string");
    try {
      req.method = parse_selection_method(m->get_ref<const std::string&>());
    } catch (const Error&) {
      throw Error(ErrorCode::InvalidArgument, "\"method\" must be \"resllm\" or \"embedding\"");
    }
  }
  if (auto r = j.find("representation"); r != j.end() && !r->is_null()) {
    if (!r->is_object()) throw Error(ErrorCode::InvalidArgument, "\"representation\" must be an object");
    for (const auto& [key, value] : r->items()) {
      if (!value.is_boolean()) throw Error(ErrorCode::InvalidArgument, "representation flags must be booleans");
      if (key == "description") req.representation.use_description = value.get<bool>();
      else if (key == "snippets") req.representation.use_similar_snippets = value.get<bool>();
      else throw Error(ErrorCode::InvalidArgument, "unknown representation flag '" + key + "'");
    }
  }
  if (auto f = j.find("filter"); f != j.end() && !f->is_null()) {
    if (!f->is_boolean()) throw Error(ErrorCode::InvalidArgument, "\"filter\" must be a boolean");
    req.filter_nonpositive = f->get<bool>();
  }
  return req;
}

class SelectionService {
 public:
  explicit SelectionService(std::shared_ptr<const ServiceState> state)
      : state_(std::move(state)), inflight_(std::make_shared<std::atomic<int>>(0)) {}

  HttpReply handle_healthz() const { return {200, R"({"status":"ok"})"}; }

  HttpReply handle_resources() const {
    OrderedJson list = OrderedJson::array();
    for (const auto& r : state_->registry.resources()) list.push_back(to_json_value(r));
    return {200, OrderedJson{{"resources", std::move(list)}}.dump()};
  }

  /// Runs the selection on a worker thread bounded by the request timeout.
  HttpReply handle_select(std::string_view body) const {
    if (inflight_->fetch_add(1) >= std::max(state_->config.max_inflight, 1)) {
      inflight_->fetch_sub(1);
      return error_reply(503, "too many selection jobs in flight");
    }
    auto task = std::make_shared<std::packaged_task<HttpReply()>>(
        [state = state_, inflight = inflight_, request = std::string(body)] {
          HttpReply reply = select(*state, request);
          inflight->fetch_sub(1);
          return reply;
        });
    auto result = task->get_future();
    std::thread([task] { (*task)(); }).detach();
    if (result.wait_for(std::chrono::seconds(state_->config.request_timeout_s)) == std::future_status::timeout)
      return error_reply(504, "selection timed out");
    return result.get();
  }

  /// Synchronous core of /select.
  static HttpReply select(const ServiceState& state, std::string_view body) {
    auto start = std::chrono::steady_clock::now();
    try {
      SelectionRequest req = parse_select_request(body, state.default_representation, state.registry.size());
      if (req.method == SelectionMethod::EmbeddingBaseline && !state.index)
        return error_reply(400, "embedding index is not loaded");
      SelectionContext ctx;
      ctx.registry = &state.registry;
      ctx.client = state.client.get();
      ctx.index = state.index.get();
      ctx.encoder = state.encoder ? &state.encoder : nullptr;
      ctx.sampler = state.sampler.get();
      if (state.templates) ctx.templates = state.templates.get();
      ctx.embedding_top_n = state.embedding_top_n;
      if (req.representation.use_similar_snippets && !ctx.sampler)
        return error_reply(400, "snippet representation needs a loaded query log and index");
      ResourceRanking ranking = rank_resources(req, ctx);

      SelectResponse resp;
      resp.query_id = ranking.query_id;
      resp.method = std::string(to_string(req.method));
      for (const auto& e : ranking.entries) {
        const Resource& r = state.registry.at(e.resource_id);
        resp.entries.push_back({r.id, r.name, r.url, e.score});
      }
      if (state.config.report_elapsed) {
        resp.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
      }
      return {200, to_json_value(resp).dump()};
    } catch (const Error& e) {
      return error_reply(http_status_for(e.code()), e.what());
    } catch (const std::exception& e) {
      return error_reply(500, e.what());
    }
  }

  void bind(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpReply& reply) {
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    };
    server.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_healthz()); });
    server.Get("/resources", [this, send](const httplib::Request&, httplib::Response& res) { send(res, handle_resources()); });
    server.Post("/select", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, handle_select(req.body)); });
  }

 private:
  std::shared_ptr<const ServiceState> state_;
  std::shared_ptr<std::atomic<int>> inflight_;
};

}  // namespace fedbroker
