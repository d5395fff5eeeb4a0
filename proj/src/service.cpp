#include "evalkit/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "evalkit/hash.hpp"
#include "evalkit/metrics.hpp"

namespace evalkit {

json LeaderboardRow::to_json() const {
  return json{{"rank", rank},
              {"model", model},
              {"dataset", {{"path", dataset_path}, {"sha256", dataset_hash}}},
              {"metric", metric_key},
              {"value", value},
              {"verified", verified},
              {"proposal_id", proposal_id},
              {"state", proposal_state_name(state)}};
}

EvaluationService::EvaluationService(ServiceConfig config)
    : config_(std::move(config)),
      registry_(config_.registry),
      store_(config_.db_path, config_.blob_dir) {
  store_.recover_stale_jobs();
}

EvaluationService::~EvaluationService() { stop_workers(); }

std::string EvaluationService::submit_job(const JobSpec& spec, bool force_rerun) {
  if (spec.task.empty()) raise(ErrorCode::InvalidSpec, "field 'task' is required");
  bool known = false;
  for (const auto& id : known_task_ids()) known = known || id == spec.task;
  if (!known) raise(ErrorCode::InvalidSpec, "unknown task '" + spec.task + "'");
  {
    std::ifstream probe(spec.dataset_path);
    if (!probe)
      raise(ErrorCode::DatasetUnreadable,
            "dataset not readable: " + spec.dataset_path);
  }
  for (const auto& metric : spec.metrics)
    if (!registry_.resolves(metric))
      raise(ErrorCode::InvalidSpec, "unknown metric '" + metric + "'");
  for (const auto& provider : spec.providers)
    if (provider.name.empty())
      raise(ErrorCode::InvalidSpec, "provider entries need a model name");
  return store_.submit_job(spec, force_rerun);
}

JobRecord EvaluationService::get_job(const std::string& id) {
  auto job = store_.get_job(id);
  if (!job) raise(ErrorCode::NotFound, "no job '" + id + "'");
  return *job;
}

std::vector<JobRecord> EvaluationService::list_jobs() { return store_.list_jobs(); }

ProposalRecord EvaluationService::get_proposal(const std::string& id) {
  auto p = store_.get_proposal(id);
  if (!p) raise(ErrorCode::NotFound, "no proposal '" + id + "'");
  return *p;
}

json EvaluationService::proposal_report(const ProposalRecord& proposal) {
  return json::parse(store_.get_blob(proposal.report_key));
}

bool EvaluationService::token_owns_model(const std::string& token,
                                         const std::string& model) const {
  for (const auto& [prefix, owner_token] : config_.owner_tokens) {
    if (model.rfind(prefix, 0) == 0 && token == owner_token) return true;
  }
  return false;
}

ProposalRecord EvaluationService::review_proposal(const std::string& id,
                                                  bool approve,
                                                  const std::string& token) {
  auto proposal = get_proposal(id);
  if (!token_owns_model(token, proposal.model))
    raise(ErrorCode::Unauthorized,
          "token is not authorized for model '" + proposal.model + "'");
  return store_.decide_proposal(id, approve);
}

ProposalRecord EvaluationService::import_self_reported(
    const std::string& model, const std::string& dataset_ref,
    const std::string& metric_key, double value,
    const std::string& source_note) {
  if (!std::isfinite(value))
    raise(ErrorCode::InvalidValue, "metric value must be finite");
  if (!registry_.known_metric_key(metric_key))
    raise(ErrorCode::UnknownMetric,
          "no module declares a score named '" + metric_key + "'");

  // minimal report shaped like an evaluator report
  json report{
      {"task", ""},
      {"dataset", {{"path", dataset_ref}, {"sha256", ""}}},
      {"provider", "self-reported"},
      {"model", model},
      {"metrics",
       json::array({json{{"values", {{metric_key, value}}},
                         {"module_id", "self-reported"},
                         {"module_version", ""},
                         {"parameters_used", json::object()},
                         {"source", "self-reported"},
                         {"revision", ""}}})},
      {"confidence_intervals", json::object()},
      {"source_note", source_note}};
  std::string key = store_.put_blob(report.dump());
  std::string id = store_.create_proposal("", model, dataset_ref, "", key,
                                          /*verified=*/false, source_note);
  return get_proposal(id);
}

// ---------------------------------------------------------------------------
// worker

void EvaluationService::execute_job(JobRecord job) {
  try {
    TaskSpec task = task_spec(job.spec.task);
    EvaluateOptions options;
    options.batch_size = job.spec.options.value("batch_size", 8);
    options.ci = job.spec.options.value("ci", false);
    options.ci_level = job.spec.options.value("ci_level", 0.95);
    options.ci_iterations = job.spec.options.value("ci_iterations", 1000);
    options.seed = job.spec.options.value("seed", 42);

    for (const auto& provider_spec : job.spec.providers) {
      auto provider = PredictionProvider::subprocess(provider_spec.argv,
                                                     config_.provider_timeout_ms);
      EvaluationReport report =
          evaluate_task(task, job.spec.dataset_path, provider, job.spec.metrics,
                        registry_, options);
      report.model_name = provider_spec.name;

      // move the predictions artifact into the content-addressed blob dir
      std::string artifact;
      {
        std::ifstream in(report.predictions_artifact, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        artifact = buf.str();
      }
      std::error_code ec;
      std::filesystem::remove(report.predictions_artifact, ec);
      report.predictions_artifact = "blob:" + store_.put_blob(artifact);

      std::string report_key = store_.put_blob(report.to_json().dump());
      store_.create_proposal(job.id, provider_spec.name, report.dataset_path,
                             report.dataset_hash, report_key,
                             /*verified=*/true, "");
    }
    store_.finish_job(job.id, true, "");
  } catch (const Error& e) {
    store_.finish_job(job.id, false, e.what());
  } catch (const std::exception& e) {
    store_.finish_job(job.id, false, std::string("internal: ") + e.what());
  }
}

int EvaluationService::run_worker_drain() {
  int processed = 0;
  while (!stopping_.load()) {
    auto job = store_.claim_next_job();
    if (!job) break;
    execute_job(std::move(*job));
    ++processed;
  }
  return processed;
}

void EvaluationService::start_workers() {
  stopping_.store(false);
  for (int i = 0; i < std::max(1, config_.worker_count); ++i) {
    workers_.emplace_back([this] {
      while (!stopping_.load()) {
        auto job = store_.claim_next_job();
        if (!job) {
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          continue;
        }
        execute_job(std::move(*job));
      }
    });
  }
}

void EvaluationService::stop_workers() {
  stopping_.store(true);
  for (auto& w : workers_)
    if (w.joinable()) w.join();
  workers_.clear();
}

// ---------------------------------------------------------------------------
// leaderboard

std::vector<LeaderboardRow> EvaluationService::leaderboard(
    const LeaderboardQuery& query) {
  auto direction = registry_.higher_is_better(query.metric_key);
  if (!direction)
    raise(ErrorCode::UnknownMetricDirection,
          "no module card declares a ranking direction for '" +
              query.metric_key + "'");
  bool higher = *direction;

  std::vector<LeaderboardRow> rows;
  for (const auto& proposal : store_.list_proposals()) {
    if (proposal.state == ProposalState::Closed && !query.include_closed)
      continue;
    if (query.verified_only && !proposal.verified) continue;
    if (!query.dataset.empty() && proposal.dataset_path != query.dataset &&
        proposal.dataset_hash != query.dataset)
      continue;

    json report;
    try {
      report = proposal_report(proposal);
    } catch (const Error&) {
      continue;  // blob pruned externally; skip rather than fail the board
    }
    if (!query.task.empty() && report.value("task", "") != query.task) continue;

    // first metric result carrying the requested scalar key wins
    for (const auto& result : report.value("metrics", json::array())) {
      const json& values = result.value("values", json::object());
      if (values.contains(query.metric_key) &&
          values[query.metric_key].is_number()) {
        LeaderboardRow row;
        row.model = proposal.model;
        row.dataset_path = proposal.dataset_path;
        row.dataset_hash = proposal.dataset_hash;
        row.metric_key = query.metric_key;
        row.value = values[query.metric_key].get<double>();
        row.verified = proposal.verified;
        row.proposal_id = proposal.id;
        row.state = proposal.state;
        rows.push_back(std::move(row));
        break;
      }
    }
  }

  std::sort(rows.begin(), rows.end(),
            [higher](const LeaderboardRow& a, const LeaderboardRow& b) {
              if (a.value != b.value)
                return higher ? a.value > b.value : a.value < b.value;
              if (a.verified != b.verified) return a.verified;
              return a.proposal_id < b.proposal_id;
            });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = int(i + 1);
  return rows;
}

json EvaluationService::model_card_metadata(const std::string& model) {
  json results = json::array();
  for (const auto& proposal : store_.list_proposals()) {
    if (proposal.model != model || proposal.state != ProposalState::Approved)
      continue;
    json report = proposal_report(proposal);
    results.push_back(
        json{{"proposal_id", proposal.id},
             {"dataset", {{"path", proposal.dataset_path},
                          {"sha256", proposal.dataset_hash}}},
             {"verified", proposal.verified},
             {"task", report.value("task", "")},
             {"metrics", report.value("metrics", json::array())}});
  }
  return json{{"model", model}, {"results", results}};
}

// ---------------------------------------------------------------------------
// http

namespace {

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::AlreadyDecided: return 409;
    case ErrorCode::Unauthorized: return 403;
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidValue:
    case ErrorCode::UnknownMetric:
    case ErrorCode::UnknownMetricDirection:
    case ErrorCode::UnknownModule:
    case ErrorCode::DatasetUnreadable: return 400;
    default: return 500;
  }
}

void reply_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(2) + "\n", "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  reply_json(res,
             json{{"error", {{"code", error_code_name(e.code())},
                             {"message", e.message()}}}},
             status_for(e.code()));
}

template <typename Fn>
void handle(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply_error(res, e);
  } catch (const std::exception& e) {
    reply_json(res,
               json{{"error", {{"code", "Internal"}, {"message", e.what()}}}},
               500);
  }
}

}  // namespace

struct ServiceHttp::Impl {
  httplib::Server server;
  std::thread thread;
};

ServiceHttp::ServiceHttp(EvaluationService& service)
    : service_(service), impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;

  server.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded())
        raise(ErrorCode::InvalidSpec, "request body is not valid JSON");
      bool force = req.has_param("force") && req.get_param_value("force") == "1";
      if (body.contains("force_rerun")) force = body["force_rerun"].get<bool>();
      JobSpec spec = JobSpec::from_json(
          body.contains("spec") ? body["spec"] : body);
      std::string id = service_.submit_job(spec, force);
      reply_json(res, service_.get_job(id).to_json());
    });
  });

  server.Get(R"(/jobs/([0-9A-Z]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      reply_json(res, service_.get_job(req.matches[1]).to_json());
    });
  });

  server.Get("/jobs", [this](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] {
      json out = json::array();
      for (const auto& job : service_.list_jobs()) out.push_back(job.to_json());
      reply_json(res, json{{"jobs", out}});
    });
  });

  server.Get(R"(/proposals/([0-9A-Z]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      auto proposal = service_.get_proposal(req.matches[1]);
      json body = proposal.to_json();
      body["report"] = service_.proposal_report(proposal);
      reply_json(res, body);
    });
  });

  server.Post(R"(/proposals/([0-9A-Z]+)/review)",
              [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded())
        raise(ErrorCode::InvalidSpec, "request body is not valid JSON");
      std::string decision = body.value("decision", "");
      if (decision != "approve" && decision != "close")
        raise(ErrorCode::InvalidSpec, "decision must be approve or close");
      std::string token = body.value("token", "");
      auto updated = service_.review_proposal(req.matches[1],
                                              decision == "approve", token);
      reply_json(res, updated.to_json());
    });
  });

  server.Get("/leaderboards",
             [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      LeaderboardQuery query;
      query.dataset = req.get_param_value("dataset");
      query.metric_key = req.get_param_value("metric");
      query.task = req.get_param_value("task");
      query.verified_only = req.get_param_value("verified") == "1";
      query.include_closed = req.get_param_value("include_closed") == "1";
      if (query.metric_key.empty())
        raise(ErrorCode::InvalidSpec, "query parameter 'metric' is required");
      json rows = json::array();
      for (const auto& row : service_.leaderboard(query))
        rows.push_back(row.to_json());
      reply_json(res, json{{"entries", rows}});
    });
  });

  server.Post("/results/self-reported",
              [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded())
        raise(ErrorCode::InvalidSpec, "request body is not valid JSON");
      if (!body.contains("value") || !body["value"].is_number())
        raise(ErrorCode::InvalidValue, "field 'value' must be a number");
      auto proposal = service_.import_self_reported(
          body.value("model", ""), body.value("dataset", ""),
          body.value("metric", ""), body["value"].get<double>(),
          body.value("source", ""));
      reply_json(res, proposal.to_json());
    });
  });

  server.Get(R"(/models/(.+)/card-metadata)",
             [this](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] {
      reply_json(res, service_.model_card_metadata(req.matches[1]));
    });
  });

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply_json(res, json{{"status", "ok"}});
  });
}

ServiceHttp::~ServiceHttp() { stop(); }

bool ServiceHttp::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int ServiceHttp::listen_async(const std::string& host) {
  int port = impl_->server.bind_to_any_port(host);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ServiceHttp::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace evalkit
