#pragma once

// `fedbroker` command line. Each subcommand loads its inputs, calls the
// library operation it is named after, and writes the result.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedbroker/config.hpp"
#include "fedbroker/eval.hpp"
#include "fedbroker/ingest.hpp"
#include "fedbroker/selector.hpp"
#include "fedbroker/service.hpp"
#include "fedbroker/slat.hpp"

namespace fedbroker {

namespace cli {

struct CommonOptions {
  std::string config_path;
  std::string data_dir;
  std::string mock_script;
  std::string templates_dir;
};

struct Session {
  BrokerConfig config;
  std::shared_ptr<const TemplateSet> templates;
  fs::path data_dir;
};

inline Session open_session(const CommonOptions& opts) {
  Session s;
  s.config = load_config(opts.config_path.empty() ? std::nullopt : std::optional<fs::path>(opts.config_path));
  if (!opts.mock_script.empty()) {
    s.config.backend.kind = "mock";
    s.config.backend.mock_script = opts.mock_script;
  }
  std::string tdir = opts.templates_dir.empty() ? s.config.templates_dir : opts.templates_dir;
  s.templates = std::make_shared<const TemplateSet>(tdir.empty() ? TemplateSet::builtin() : TemplateSet::from_directory(tdir));
  if (!opts.data_dir.empty()) {
    s.data_dir = opts.data_dir;
  } else if (const char* env = std::getenv("FEDBROKER_DATA_DIR"); env && *env) {
    s.data_dir = env;
  } else {
    s.data_dir = "data";
  }
  return s;
}

inline Encoder make_encoder(const EmbeddingConfig& c) { return HashingEncoder(c.dim, c.seed); }

inline std::shared_ptr<const EmbeddingIndex> obtain_index(const std::string& index_path, const Dataset& ds,
                                                          const Encoder& encoder) {
  if (!index_path.empty()) return std::make_shared<const EmbeddingIndex>(read_embedding_index(index_path));
  return std::make_shared<const EmbeddingIndex>(build_embedding_index(ds.query_log, ds.registry, encoder));
}

inline void print_ranking(std::ostream& out, const ResourceRanking& ranking, const ResourceRegistry& registry) {
  out << "# query " << ranking.query_id << " (" << to_string(ranking.method) << ")\n";
  out << std::left << std::setw(6) << "rank" << std::setw(24) << "resource_id" << std::setw(32) << "name" << "score\n";
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    const auto& e = ranking.entries[i];
    out << std::left << std::setw(6) << (i + 1) << std::setw(24) << e.resource_id << std::setw(32)
        << registry.at(e.resource_id).name << std::fixed << std::setprecision(6) << e.score << '\n';
  }
}

}  // namespace cli

inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated search resource selection broker", "fedbroker"};
  app.require_subcommand(1);
  cli::CommonOptions common;
  app.add_option("--config", common.config_path, "fedbroker.toml path")->check(CLI::ExistingFile);
  app.add_option("--data-dir", common.data_dir, "canonical dataset directory (default $FEDBROKER_DATA_DIR or ./data)");
  app.add_option("--mock-script", common.mock_script, "use the mock backend driven by this JSON script");
  app.add_option("--templates-dir", common.templates_dir, "directory with selection/judging/querygen .tmpl files");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a data directory and write its manifest");
  std::string manifest_out;
  ingest->add_option("--manifest", manifest_out, "manifest path (default <data-dir>/manifest.json)");

  // select
  auto* select = app.add_subcommand("select", "rank resources for a query");
  std::string query_text, method_name = "resllm", run_out, index_path, format = "table";
  std::optional<int> k;
  bool all_test = false, use_description = false, use_snippets = false, filter = false;
  auto* query_opt = select->add_option("--query", query_text, "query text");
  auto* all_opt = select->add_flag("--all-test", all_test, "rank for every test query in the dataset");
  query_opt->excludes(all_opt);
  select->add_option("--k", k, "keep only the top k resources")->check(CLI::PositiveNumber);
  select->add_option("--method", method_name, "resllm | embedding")->check(CLI::IsMember({"resllm", "embedding"}));
  select->add_flag("--description", use_description, "include resource descriptions in the prompt");
  select->add_flag("--snippets", use_snippets, "include similar logged snippets in the prompt");
  select->add_flag("--filter", filter, "drop resources with negative score");
  select->add_option("--index", index_path, "embedding index file (default: build from the query log)");
  select->add_option("--out", run_out, "write the run (JSONL rankings) here");
  select->add_option("--format", format, "table | json")->check(CLI::IsMember({"table", "json"}));

  // judge
  auto* judge = app.add_subcommand("judge", "synthetic judgments for every logged query-snippet pair");
  std::string out_dir = "artifacts", rejudge_queries;
  judge->add_option("--out-dir", out_dir, "output directory");
  judge->add_option("--queries", rejudge_queries, "generated queries to re-judge against their source query's snippets");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "graded precision per (query, resource) -> 0-100 scores");
  std::string judgments_path, scores_out = "artifacts/resource_scores.jsonl";
  aggregate->add_option("--judgments", judgments_path, "judgments.jsonl")->required()->check(CLI::ExistingFile);
  aggregate->add_option("--out", scores_out, "resource_scores.jsonl output");

  // make-training-data
  auto* training = app.add_subcommand("make-training-data", "pseudo-label scores and emit yes/no instruction pairs");
  std::string scores_path, dataset_out = "artifacts/slat_dataset.jsonl", extra_queries, index_for_training;
  training->add_option("--scores", scores_path, "resource_scores.jsonl (omit to run the full pipeline)");
  training->add_option("--queries", extra_queries, "generated conversational queries to include");
  training->add_option("--out", dataset_out, "slat_dataset.jsonl output (full pipeline writes next to it)");
  training->add_option("--index", index_for_training, "embedding index for the snippet representation");

  // gen-conversational
  auto* genconv = app.add_subcommand("gen-conversational", "generate conversational queries from navigational snippets");
  std::string gen_judgments, gen_out = "artifacts/generated_queries.jsonl";
  std::uint64_t seed = 0;
  genconv->add_option("--judgments", gen_judgments, "judgments.jsonl")->required()->check(CLI::ExistingFile);
  genconv->add_option("--out", gen_out, "generated queries output");
  genconv->add_option("--seed", seed, "snippet sampling seed");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "nDCG@{10,20,100} and nP@{1,5} of a run");
  std::string run_path, qrels_path, eval_format = "json";
  evaluate->add_option("--run", run_path, "run JSONL (one ResourceRanking per line)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--qrels", qrels_path, "qrels JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--format", eval_format, "json | table | csv")->check(CLI::IsMember({"json", "table", "csv"}));

  // baseline-index
  auto* baseline = app.add_subcommand("baseline-index", "encode logged snippets into an embedding index");
  std::string index_out = "artifacts/embedding_index.jsonl";
  baseline->add_option("--out", index_out, "index output");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP selection service");
  std::optional<int> port;
  std::string host, serve_index;
  serve->add_option("--port", port, "listen port");
  serve->add_option("--host", host, "listen address");
  serve->add_option("--index", serve_index, "embedding index file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (const auto* sub : app.get_subcommands()) failing = sub;
    err << failing->help();
    return 2;
  }

  try {
    cli::Session session = cli::open_session(common);
    const BrokerConfig& cfg = session.config;

    if (*ingest) {
      DatasetManifest manifest = manifest_for_directory(session.data_dir);
      Dataset ds = load_dataset(manifest);
      fs::path target = manifest_out.empty() ? session.data_dir / "manifest.json" : fs::path(manifest_out);
      if (!manifest_out.empty()) manifest.base_dir = target.parent_path();
      if (!manifest_out.empty()) {
        for (auto& [kind, entry] : manifest.files) entry.path = fs::absolute(session.data_dir / entry.path).string();
      }
      write_manifest(manifest, target);
      OrderedJson summary{{"resources", ds.registry.size()},
                          {"test_queries", ds.test_queries.size()},
                          {"logged_queries", ds.query_log.queries().size()},
                          {"generated_queries", ds.generated_queries.size()},
                          {"log_snippets", ds.query_log.snippets().size()},
                          {"test_snippets", ds.test_snippets.size()},
                          {"judgments", ds.judgments.size()},
                          {"qrels_queries", ds.qrels ? ds.qrels->size() : 0},
                          {"manifest", target.string()}};
      out << summary.dump(2) << '\n';
      return 0;
    }

    if (*evaluate) {
      auto rankings = read_jsonl(run_path, ranking_from_json);
      MetricReport report = evaluate_run(rankings, read_qrels(qrels_path));
      if (eval_format == "json") out << to_json_value(report).dump(2) << '\n';
      else if (eval_format == "table") out << format_table(report);
      else out << format_csv(report);
      return 0;
    }

    if (*aggregate) {
      auto judgments = read_jsonl(judgments_path, judgment_from_json);
      auto scores = aggregate_scores(std::move(judgments), cfg.slat(session.templates.get()));
      ManifestEntry e = write_jsonl(scores_out, scores);
      out << to_json_value(e).dump() << '\n';
      return 0;
    }

    Dataset ds = load_dataset_directory(session.data_dir);
    Encoder encoder = cli::make_encoder(cfg.embedding);

    if (*baseline) {
      EmbeddingIndex index = build_embedding_index(ds.query_log, ds.registry, encoder);
      ManifestEntry e = write_embedding_index(index, index_out);
      out << to_json_value(e).dump() << '\n';
      return 0;
    }

    if (*select) {
      if (query_text.empty() && !all_test) throw CLI::RequiredError("--query or --all-test");
      std::shared_ptr<LlmClient> client = make_client(cfg.backend);
      SelectionMethod method = parse_selection_method(method_name);
      RepresentationConfig rep = cfg.representation;
      rep.use_description = rep.use_description || use_description;
      rep.use_similar_snippets = rep.use_similar_snippets || use_snippets;

      std::shared_ptr<const EmbeddingIndex> index;
      std::optional<SimilarSnippetSampler> sampler;
      if (method == SelectionMethod::EmbeddingBaseline || rep.use_similar_snippets) {
        index = cli::obtain_index(index_path, ds, encoder);
        sampler.emplace(*index, ds.query_log, encoder);
      }
      SelectionContext ctx;
      ctx.registry = &ds.registry;
      ctx.client = client.get();
      ctx.index = index.get();
      ctx.encoder = &encoder;
      ctx.sampler = sampler ? &*sampler : nullptr;
      ctx.templates = session.templates.get();
      ctx.embedding_top_n = cfg.embedding.top_n;

      std::vector<Query> queries;
      if (all_test) {
        queries = ds.test_queries;
      } else {
        queries.push_back(Query{"cli-" + sha256_hex(query_text).substr(0, 16), query_text, QueryKind::AdHoc,
                                QueryOrigin::Test, std::nullopt});
      }
      std::vector<ResourceRanking> run;
      for (const auto& q : queries) {
        SelectionRequest req{q, k, method, rep, filter};
        run.push_back(rank_resources(req, ctx));
      }
      if (!run_out.empty()) write_jsonl(run_out, run);
      for (const auto& r : run) {
        if (format == "json") out << to_json_value(r).dump() << '\n';
        else cli::print_ranking(out, r, ds.registry);
      }
      return 0;
    }

    if (*judge) {
      auto client = make_client(cfg.backend);
      SlatConfig sc = cfg.slat(session.templates.get());
      JudgingOutput judged;
      if (!rejudge_queries.empty()) {
        std::map<std::string, Query> shown;
        for (auto& q : read_jsonl(rejudge_queries, query_from_json)) {
          if (q.source_query_id) shown.emplace(*q.source_query_id, std::move(q));
        }
        judged = judge_query_log(ds.query_log, ds.registry, *client, sc, &shown);
      } else {
        judged = judge_query_log(ds.query_log, ds.registry, *client, sc);
      }
      fs::path dir(out_dir);
      OrderedJson summary;
      summary["judgments"] = to_json_value(write_jsonl(dir / "judgments.jsonl", judged.judgments));
      summary["judge_failures"] = to_json_value(write_jsonl(dir / "judge_failures.jsonl", judged.failures));
      summary["skipped_pairs"] = to_json_value(write_jsonl(dir / "skipped_pairs.jsonl", judged.skipped));
      out << summary.dump(2) << '\n';
      return 0;
    }

    if (*training) {
      SlatConfig sc = cfg.slat(session.templates.get());
      std::shared_ptr<const EmbeddingIndex> index;
      std::optional<SimilarSnippetSampler> sampler;
      if (sc.representation.use_similar_snippets) {
        index = cli::obtain_index(index_for_training, ds, encoder);
        sampler.emplace(*index, ds.query_log, encoder);
      }
      const SimilarSnippetSampler* sp = sampler ? &*sampler : nullptr;
      fs::path dataset_path(dataset_out);
      if (scores_path.empty()) {
        auto client = make_client(cfg.backend);
        SlatResult result = run_slat_pipeline(ds.query_log, ds.registry, *client, sc, dataset_path.parent_path(), sp);
        if (dataset_path.filename() != "slat_dataset.jsonl") write_jsonl(dataset_path, result.dataset);
        OrderedJson summary;
        for (const auto& [name, entry] : result.artifacts) summary[name] = to_json_value(entry);
        summary["pairs_skipped"] = result.judging.skipped.size();
        summary["parse_failures"] = result.judging.failures.size();
        out << summary.dump(2) << '\n';
        return 0;
      }
      auto scores = read_jsonl(scores_path, score_from_json);
      std::vector<Query> queries = ds.query_log.queries();
      if (!extra_queries.empty()) {
        for (auto& q : read_jsonl(extra_queries, query_from_json)) queries.push_back(std::move(q));
      }
      auto dataset = make_training_data(scores, ds.registry, queries, sc, sp);
      out << to_json_value(write_jsonl(dataset_path, dataset)).dump() << '\n';
      return 0;
    }

    if (*genconv) {
      auto client = make_client(cfg.backend);
      auto judgments = read_jsonl(gen_judgments, judgment_from_json);
      std::map<std::string, std::vector<std::pair<Snippet, Judgment>>> by_query;
      for (const auto& j : judgments) {
        if (const Snippet* s = ds.query_log.find(j.resource_id, j.query_id, j.snippet_rank)) by_query[j.query_id].emplace_back(*s, j);
      }
      std::vector<Query> generated;
      std::size_t insufficient = 0;
      for (const auto& q : ds.query_log.queries()) {
        auto it = by_query.find(q.id);
        if (it == by_query.end()) {
          ++insufficient;
          continue;
        }
        try {
          generated.push_back(generate_conversational_query(q, it->second, *client, seed, 256, *session.templates));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::InsufficientNavigationalSnippets) throw;
          ++insufficient;
        }
      }
      ManifestEntry e = write_jsonl(gen_out, generated);
      err << "generated " << generated.size() << " queries; " << insufficient
          << " logged queries lacked 3 navigational snippets\n";
      out << to_json_value(e).dump() << '\n';
      return 0;
    }

    if (*serve) {
      auto state = std::make_shared<ServiceState>();
      state->registry = ds.registry;
      state->client = make_client(cfg.backend);
      state->query_log = std::make_shared<const QueryLog>(ds.query_log);
      state->encoder = encoder;
      state->templates = session.templates;
      state->default_representation = cfg.representation;
      state->config = cfg.service;
      state->embedding_top_n = cfg.embedding.top_n;
      try {
        state->index = cli::obtain_index(serve_index, ds, encoder);
        state->sampler = std::make_shared<const SimilarSnippetSampler>(*state->index, *state->query_log, encoder);
      } catch (const Error& e) {
        err << "embedding index unavailable (" << e.what() << "); embedding method disabled\n";
      }
      SelectionService service(state);
      httplib::Server server;
      service.bind(server);
      std::string bind_host = host.empty() ? cfg.service.host : host;
      int bind_port = port.value_or(cfg.service.port);
      err << "listening on " << bind_host << ":" << bind_port << '\n';
      if (!server.listen(bind_host, bind_port)) throw Error(ErrorCode::IoError, "cannot listen on " + bind_host);
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << (*select ? select->help() : app.help());
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace fedbroker
