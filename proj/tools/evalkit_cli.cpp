#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <httplib.h>

#include "evalkit/cards.hpp"
#include "evalkit/evaluator.hpp"
#include "evalkit/jsonl.hpp"
#include "evalkit/metrics.hpp"
#include "evalkit/registry.hpp"
#include "evalkit/service.hpp"

using namespace evalkit;

namespace {

// 0 success, 1 user error, 2 internal error, 3 validation violations
int exit_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::SpillIOFailure:
    case ErrorCode::ChecksumMismatch:
    case ErrorCode::ProviderCrash:
    case ErrorCode::ProviderProtocolViolation:
    case ErrorCode::ResponseTimeout:
    case ErrorCode::DegenerateMetric:
    case ErrorCode::Internal:
      return 2;
    default:
      return 1;
  }
}

std::string fmt_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string fmt_score(const ScoreValue& value) {
  struct Fmt {
    std::string operator()(double d) const { return fmt_number(d); }
    std::string operator()(const std::vector<double>& a) const {
      std::string out = "[";
      for (std::size_t i = 0; i < a.size(); ++i)
        out += (i ? ", " : "") + fmt_number(a[i]);
      return out + "]";
    }
    std::string operator()(const std::map<std::string, double>& m) const {
      std::string out = "{";
      bool first = true;
      for (const auto& [k, v] : m) {
        out += (first ? "" : ", ") + k + ": " + fmt_number(v);
        first = false;
      }
      return out + "}";
    }
  };
  return std::visit(Fmt{}, value);
}

void print_kv(const std::string& key, const std::string& value, int indent = 2) {
  std::printf("%*s%-20s %s\n", indent, "", key.c_str(), value.c_str());
}

void print_result(const ModuleResult& result) {
  std::printf("%s (v%s, %s)\n", result.module_id.c_str(),
              result.module_version.c_str(), result.source.c_str());
  for (const auto& [key, value] : result.values) print_kv(key, fmt_score(value));
}

void print_report(const EvaluationReport& report) {
  std::printf("task: %s\n", report.task_id.c_str());
  std::printf("dataset: %s (sha256 %.12s…)\n", report.dataset_path.c_str(),
              report.dataset_hash.c_str());
  std::printf("model: %s\n", report.model_name.c_str());
  for (const auto& r : report.metric_results) print_result(r);
  if (!report.confidence_intervals.empty()) {
    std::printf("confidence intervals (level %s)\n",
                fmt_number(report.confidence_intervals.begin()->second.level).c_str());
    for (const auto& [key, ci] : report.confidence_intervals)
      print_kv(key, fmt_number(ci.point) + " [" + fmt_number(ci.low) + ", " +
                        fmt_number(ci.high) + "]");
  }
  std::printf("performance\n");
  print_kv("n_examples", std::to_string(report.perf.n_examples));
  print_kv("total_time_s", fmt_number(report.perf.total_time_s));
  print_kv("throughput_ex_s", fmt_number(report.perf.throughput));
  print_kv("latency_mean_ms", fmt_number(report.perf.latency_mean_ms));
  print_kv("latency_p50_ms", fmt_number(report.perf.latency_p50_ms));
  print_kv("latency_p90_ms", fmt_number(report.perf.latency_p90_ms));
  print_kv("latency_p99_ms", fmt_number(report.perf.latency_p99_ms));
  print_kv("latency_max_ms", fmt_number(report.perf.latency_max_ms));
  std::printf("predictions artifact: %s\n", report.predictions_artifact.c_str());
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> argv;
  std::istringstream in(cmd);
  std::string tok;
  while (in >> tok) argv.push_back(tok);
  return argv;
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    auto comma = csv.find(',', pos);
    std::string part =
        csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!part.empty()) out.push_back(part);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

json http_json(httplib::Result& res, const std::string& what) {
  if (!res)
    raise(ErrorCode::IOFailure, what + ": no response from server");
  json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded())
    raise(ErrorCode::IOFailure, what + ": server sent invalid JSON");
  if (res->status >= 400) {
    std::string code = body.contains("error") ? body["error"].value("code", "") : "";
    std::string msg =
        body.contains("error") ? body["error"].value("message", res->body) : res->body;
    if (code == "NotFound") raise(ErrorCode::NotFound, msg);
    if (code == "Unauthorized") raise(ErrorCode::Unauthorized, msg);
    if (code == "AlreadyDecided") raise(ErrorCode::AlreadyDecided, msg);
    raise(ErrorCode::InvalidSpec, msg);
  }
  return body;
}

struct CompareArgs {
  std::string dataset;
  std::string test = "mcnemar";
  std::string metric = "accuracy";
  std::uint64_t iterations = 1000;
  std::uint64_t seed = 42;
  bool json_out = false;
};

int cmd_compare(const CompareArgs& args) {
  Registry registry = Registry::with_env_roots();
  auto module = registry.load(args.test == "mcnemar" ? "mcnemar" : "paired_bootstrap");
  std::vector<json> rows = read_jsonl(args.dataset);
  if (rows.empty()) raise(ErrorCode::EmptyInput, "dataset is empty");
  Batch batch = [&] {
    Table t = table_from_json_rows(module->features(), rows);
    Batch b;
    for (std::size_t i = 0; i < t.schema.size(); ++i)
      b.set(t.schema.columns[i].name, t.columns[i]);
    return b;
  }();

  json overrides = json::object();
  if (args.test == "bootstrap") {
    overrides["metric"] = args.metric;
    overrides["iterations"] = args.iterations;
    overrides["seed"] = args.seed;
  }
  ModuleResult result = module->compute(batch, overrides);

  if (args.json_out) {
    std::printf("%s\n", result.to_json().dump(2).c_str());
    return 0;
  }
  print_result(result);
  if (args.test == "mcnemar")
    std::printf("convention: exact two-sided binomial test on discordant pairs; "
                "p = min(1, 2*sum_{i<=k} C(m,i)/2^m), p = 1 when m = 0\n");
  else
    std::printf("convention: two-sided paired bootstrap; p doubles the fraction "
                "of seeded resamples whose delta opposes or zeroes the observed "
                "delta, capped at 1\n");
  return 0;
}

int cmd_measure(const std::string& dataset, const std::string& measurements,
                const std::string& column, bool json_out) {
  Registry registry = Registry::with_env_roots();
  std::vector<json> rows = read_jsonl(dataset);
  if (rows.empty()) raise(ErrorCode::EmptyInput, "dataset is empty");

  json out = json::array();
  std::vector<ModuleResult> results;
  for (const auto& id : split_csv(measurements)) {
    auto module = registry.load(id);
    if (module->kind() != ModuleKind::Measurement)
      raise(ErrorCode::UnknownModule,
            "'" + id + "' is not a measurement module");
    // measurements consume a single 'data' column, taken from --column
    Column data = empty_column(module->features().columns.front().type);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].contains(column))
        raise(ErrorCode::DatasetParseError,
              "row " + std::to_string(i) + " lacks column '" + column + "'");
      append_json_value(data, rows[i][column], column);
    }
    Batch batch;
    batch.set("data", std::move(data));
    ModuleResult result = module->compute(batch);
    out.push_back(result.to_json());
    results.push_back(std::move(result));
  }
  if (json_out)
    std::printf("%s\n", out.dump(2).c_str());
  else
    for (const auto& r : results) print_result(r);
  return 0;
}

std::map<std::string, std::string> load_owner_tokens(const std::string& path) {
  std::map<std::string, std::string> owners;
  if (path.empty()) return owners;
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IOFailure, "cannot read owners file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    raise(ErrorCode::InvalidSpec, "owners file must be a JSON object of "
                                  "model-prefix -> token");
  for (const auto& [prefix, token] : j.items())
    owners[prefix] = token.get<std::string>();
  return owners;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evalkit: evaluation modules, harness, and local service"};
  app.require_subcommand(1);

  // create -------------------------------------------------------------
  auto* create = app.add_subcommand("create", "scaffold a new module");
  std::string create_name, create_kind = "metric", create_out;
  bool create_json = false;
  create->add_option("name", create_name, "module id ([a-z0-9_-]+)")->required();
  create->add_option("--kind", create_kind, "metric|comparison|measurement");
  create->add_option("--out", create_out, "target directory")->required();
  create->add_flag("--json", create_json);

  // validate -----------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "validate a module directory or built-in id");
  std::string validate_target;
  bool validate_json = false;
  validate->add_option("target", validate_target, "path or built-in module id")->required();
  validate->add_flag("--json", validate_json);

  // run ----------------------------------------------------------------
  auto* run = app.add_subcommand("run", "evaluate a provider on a dataset");
  std::string run_task = "text-classification", run_dataset, run_provider_cmd;
  std::string run_metrics, run_artifact_dir, run_label_map;
  bool run_ci = false, run_json = false;
  double run_level = 0.95;
  std::uint64_t run_iterations = 1000, run_seed = 42;
  std::size_t run_batch = 8;
  int run_timeout = 30'000;
  run->add_option("--task", run_task, "task id");
  run->add_option("--dataset", run_dataset, "JSONL dataset")->required();
  run->add_option("--provider-cmd", run_provider_cmd, "provider command line")->required();
  run->add_option("--metrics", run_metrics, "comma-separated module ids");
  run->add_flag("--ci", run_ci, "attach bootstrap confidence intervals");
  run->add_option("--level", run_level, "CI level");
  run->add_option("--iterations", run_iterations, "bootstrap iterations");
  run->add_option("--seed", run_seed, "resampling seed");
  run->add_option("--batch-size", run_batch, "provider batch size");
  run->add_option("--timeout-ms", run_timeout, "per-batch response timeout");
  run->add_option("--artifact-dir", run_artifact_dir, "predictions artifact directory");
  run->add_option("--label-map", run_label_map, "JSON object mapping string labels to ids");
  run->add_flag("--json", run_json);

  // compare ------------------------------------------------------------
  auto* compare = app.add_subcommand("compare", "statistically compare two models");
  CompareArgs compare_args;
  compare->add_option("--dataset", compare_args.dataset,
                      "JSONL with predictions_a/predictions_b/references")->required();
  compare->add_option("--test", compare_args.test, "mcnemar|bootstrap");
  compare->add_option("--metric", compare_args.metric, "metric for bootstrap");
  compare->add_option("--iterations", compare_args.iterations, "bootstrap iterations");
  compare->add_option("--seed", compare_args.seed, "resampling seed");
  compare->add_flag("--json", compare_args.json_out);

  // measure ------------------------------------------------------------
  auto* measure = app.add_subcommand("measure", "run dataset measurements");
  std::string measure_dataset, measure_list, measure_column = "data";
  bool measure_json = false;
  measure->add_option("--dataset", measure_dataset, "JSONL dataset")->required();
  measure->add_option("--measurements", measure_list, "comma-separated ids")->required();
  measure->add_option("--column", measure_column, "dataset column to measure");
  measure->add_flag("--json", measure_json);

  // serve ----------------------------------------------------------------
  auto* serve = app.add_subcommand("serve", "run the evaluation service");
  std::string serve_db, serve_blobs, serve_owners, serve_host = "127.0.0.1";
  int serve_port = 8700, serve_workers = 1, serve_timeout = 30'000;
  serve->add_option("--db", serve_db, "sqlite database path");
  serve->add_option("--blob-dir", serve_blobs, "blob directory");
  serve->add_option("--owners", serve_owners, "owners file (prefix -> token)");
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--workers", serve_workers, "worker thread count");
  serve->add_option("--provider-timeout-ms", serve_timeout);

  // jobs -----------------------------------------------------------------
  auto* jobs = app.add_subcommand("jobs", "submit and inspect service jobs");
  jobs->require_subcommand(1);
  std::string jobs_server = "http://127.0.0.1:8700";
  auto* jobs_submit = jobs->add_subcommand("submit", "submit a job spec");
  std::string submit_spec;
  bool submit_force = false, submit_json = false;
  jobs_submit->add_option("--server", jobs_server, "service base URL");
  jobs_submit->add_option("--spec", submit_spec, "job spec JSON file")->required();
  jobs_submit->add_flag("--force", submit_force, "bypass spec idempotency");
  jobs_submit->add_flag("--json", submit_json);
  auto* jobs_show = jobs->add_subcommand("show", "show one job");
  std::string show_id;
  bool show_json = false;
  jobs_show->add_option("--server", jobs_server);
  jobs_show->add_option("id", show_id)->required();
  jobs_show->add_flag("--json", show_json);
  auto* jobs_list = jobs->add_subcommand("list", "list jobs");
  bool list_json = false;
  jobs_list->add_option("--server", jobs_server);
  jobs_list->add_flag("--json", list_json);

  // leaderboard ----------------------------------------------------------
  auto* board = app.add_subcommand("leaderboard", "query a leaderboard");
  std::string board_server = "http://127.0.0.1:8700";
  std::string board_dataset, board_metric, board_task;
  bool board_verified = false, board_closed = false, board_json = false;
  board->add_option("--server", board_server);
  board->add_option("--dataset", board_dataset, "dataset path or sha256");
  board->add_option("--metric", board_metric, "score key")->required();
  board->add_option("--task", board_task, "task filter");
  board->add_flag("--verified-only", board_verified);
  board->add_flag("--include-closed", board_closed);
  board->add_flag("--json", board_json);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*create) {
      ScaffoldReport report = create_scaffold(
          create_name, module_kind_from_name(create_kind), create_out);
      if (create_json) {
        json files = report.files;
        std::printf("%s\n", json{{"directory", report.directory.string()},
                                 {"files", files},
                                 {"git_initialized", report.git_initialized}}
                                .dump(2)
                                .c_str());
      } else {
        std::printf("created %s\n", report.directory.string().c_str());
        for (const auto& f : report.files) print_kv("file", f);
        print_kv("git", report.git_initialized ? "initialized" : "skipped");
      }
      return 0;
    }

    if (*validate) {
      ValidationReport report;
      if (std::filesystem::exists(validate_target))
        report = validate_module_dir(validate_target);
      else if (is_canonical_module(validate_target))
        report = validate_builtin(validate_target);
      else
        raise(ErrorCode::IOFailure,
              "no such path or built-in module: " + validate_target);
      if (validate_json) {
        std::printf("%s\n", report.to_json().dump(2).c_str());
      } else {
        std::printf("%s: %zu violation(s)\n", report.subject.c_str(),
                    report.violations.size());
        for (const auto& v : report.violations)
          std::printf("  [%s] %s: %s\n",
                      v.severity == Violation::Severity::Error ? "error" : "warning",
                      v.code.c_str(), v.message.c_str());
      }
      return report.ok() ? 0 : 3;
    }

    if (*run) {
      Registry registry = Registry::with_env_roots();
      TaskSpec task = task_spec(run_task);
      auto provider =
          PredictionProvider::subprocess(split_command(run_provider_cmd), run_timeout);
      EvaluateOptions options;
      options.batch_size = run_batch;
      options.ci = run_ci;
      options.ci_level = run_level;
      options.ci_iterations = run_iterations;
      options.seed = run_seed;
      if (!run_artifact_dir.empty()) options.artifact_dir = run_artifact_dir;
      if (!run_label_map.empty()) {
        json m = json::parse(run_label_map, nullptr, false);
        if (m.is_discarded() || !m.is_object())
          raise(ErrorCode::InvalidSpec, "--label-map must be a JSON object");
        for (const auto& [k, v] : m.items())
          options.label_map[k] = v.get<std::int64_t>();
      }
      EvaluationReport report = evaluate_task(
          task, run_dataset, provider, split_csv(run_metrics), registry, options);
      if (run_json)
        std::printf("%s\n", report.to_json().dump(2).c_str());
      else
        print_report(report);
      return 0;
    }

    if (*compare) return cmd_compare(compare_args);

    if (*measure)
      return cmd_measure(measure_dataset, measure_list, measure_column, measure_json);

    if (*serve) {
      ServiceConfig config;
      if (serve_db.empty()) {
        const char* env = std::getenv("EVALKIT_SERVICE_DB");
        serve_db = env && *env ? env : "evalkit-service.db";
      }
      if (serve_blobs.empty()) {
        const char* env = std::getenv("EVALKIT_BLOB_DIR");
        serve_blobs = env && *env ? env : serve_db + ".blobs";
      }
      config.db_path = serve_db;
      config.blob_dir = serve_blobs;
      config.owner_tokens = load_owner_tokens(serve_owners);
      config.worker_count = serve_workers;
      config.provider_timeout_ms = serve_timeout;
      config.registry = Registry::with_env_roots().options();
      EvaluationService service(std::move(config));
      service.start_workers();
      ServiceHttp http(service);
      std::fprintf(stderr, "evalkit service listening on %s:%d (db %s)\n",
                   serve_host.c_str(), serve_port, serve_db.c_str());
      bool ok = http.listen(serve_host, serve_port);
      service.stop_workers();
      if (!ok) raise(ErrorCode::IOFailure, "cannot listen on " + serve_host + ":" +
                                               std::to_string(serve_port));
      return 0;
    }

    if (*jobs_submit) {
      std::ifstream in(submit_spec);
      if (!in) raise(ErrorCode::IOFailure, "cannot read spec file: " + submit_spec);
      json spec = json::parse(in, nullptr, false);
      if (spec.is_discarded())
        raise(ErrorCode::InvalidSpec, "spec file is not valid JSON");
      if (submit_force) spec["force_rerun"] = true;
      httplib::Client client(jobs_server);
      auto res = client.Post("/jobs", spec.dump(), "application/json");
      json body = http_json(res, "submit");
      if (submit_json)
        std::printf("%s\n", body.dump(2).c_str());
      else
        std::printf("job %s (%s)\n", body.value("id", "?").c_str(),
                    body.value("state", "?").c_str());
      return 0;
    }

    if (*jobs_show) {
      httplib::Client client(jobs_server);
      auto res = client.Get("/jobs/" + show_id);
      json body = http_json(res, "show");
      if (show_json) {
        std::printf("%s\n", body.dump(2).c_str());
      } else {
        print_kv("id", body.value("id", "?"), 0);
        print_kv("state", body.value("state", "?"), 0);
        print_kv("submitted_at", body.value("submitted_at", ""), 0);
        print_kv("finished_at", body.value("finished_at", ""), 0);
        if (!body.value("failure", "").empty())
          print_kv("failure", body["failure"], 0);
        for (const auto& p : body.value("proposals", json::array()))
          print_kv("proposal", p.get<std::string>(), 0);
      }
      return 0;
    }

    if (*jobs_list) {
      httplib::Client client(jobs_server);
      auto res = client.Get("/jobs");
      json body = http_json(res, "list");
      if (list_json) {
        std::printf("%s\n", body.dump(2).c_str());
      } else {
        for (const auto& job : body.value("jobs", json::array()))
          std::printf("%-28s %-10s %s\n", job.value("id", "?").c_str(),
                      job.value("state", "?").c_str(),
                      job.value("submitted_at", "").c_str());
      }
      return 0;
    }

    if (*board) {
      httplib::Client client(board_server);
      httplib::Params params{{"metric", board_metric}};
      if (!board_dataset.empty()) params.emplace("dataset", board_dataset);
      if (!board_task.empty()) params.emplace("task", board_task);
      if (board_verified) params.emplace("verified", "1");
      if (board_closed) params.emplace("include_closed", "1");
      auto res = client.Get("/leaderboards", params, httplib::Headers{});
      json body = http_json(res, "leaderboard");
      if (board_json) {
        std::printf("%s\n", body.dump(2).c_str());
      } else {
        std::printf("%-5s %-24s %-12s %-13s %-10s %s\n", "rank", "model", "value",
                    "verified", "state", "proposal");
        for (const auto& row : body.value("entries", json::array()))
          std::printf("%-5d %-24s %-12s %-13s %-10s %s\n", row.value("rank", 0),
                      row.value("model", "?").c_str(),
                      fmt_number(row.value("value", 0.0)).c_str(),
                      row.value("verified", false) ? "verified" : "self-reported",
                      row.value("state", "?").c_str(),
                      row.value("proposal_id", "").c_str());
      }
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_class(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 1;
}
