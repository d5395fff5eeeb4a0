#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <thread>
#include <vector>

#include "evalkit/evaluator.hpp"
#include "evalkit/registry.hpp"
#include "evalkit/store.hpp"

namespace evalkit {

struct ServiceConfig {
  std::filesystem::path db_path;
  std::filesystem::path blob_dir;
  // model-name prefix -> bearer token; a token may review proposals for
  // every model its prefix matches
  std::map<std::string, std::string> owner_tokens;
  int worker_count = 1;
  RegistryOptions registry;
  int provider_timeout_ms = 30'000;
};

struct LeaderboardQuery {
  std::string dataset;  // matches the dataset path or its sha256
  std::string metric_key;
  std::string task;  // optional filter
  bool verified_only = false;
  bool include_closed = false;
};

struct LeaderboardRow {
  int rank = 0;
  std::string model;
  std::string dataset_path;
  std::string dataset_hash;
  std::string metric_key;
  double value = 0.0;
  bool verified = false;
  std::string proposal_id;
  ProposalState state = ProposalState::Proposed;

  json to_json() const;
};

// Local evaluation-as-a-service: job submission, worker execution through
// the evaluator, approval-gated result proposals, and leaderboards.
class EvaluationService {
 public:
  explicit EvaluationService(ServiceConfig config);
  ~EvaluationService();

  // validates and persists; idempotent on the spec hash unless force
  std::string submit_job(const JobSpec& spec, bool force_rerun = false);
  JobRecord get_job(const std::string& id);      // NotFound
  std::vector<JobRecord> list_jobs();

  ProposalRecord get_proposal(const std::string& id);  // NotFound
  json proposal_report(const ProposalRecord& proposal);
  ProposalRecord review_proposal(const std::string& id, bool approve,
                                 const std::string& token);

  ProposalRecord import_self_reported(const std::string& model,
                                      const std::string& dataset_ref,
                                      const std::string& metric_key,
                                      double value,
                                      const std::string& source_note);

  std::vector<LeaderboardRow> leaderboard(const LeaderboardQuery& query);

  // approved results for a model, ready for model-card metadata
  json model_card_metadata(const std::string& model);

  // worker loop: claim + execute until the queue drains; returns count
  int run_worker_drain();
  void start_workers();
  void stop_workers();

  Store& store() { return store_; }
  const Registry& registry() const { return registry_; }

 private:
  void execute_job(JobRecord job);
  bool token_owns_model(const std::string& token, const std::string& model) const;

  ServiceConfig config_;
  Registry registry_;
  Store store_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
};

// Blocking HTTP front end; returns when stop() is called from a handler
// thread or signal context.
class ServiceHttp {
 public:
  explicit ServiceHttp(EvaluationService& service);
  ~ServiceHttp();

  bool listen(const std::string& host, int port);  // blocks
  // binds an ephemeral port and serves from a background thread (tests)
  int listen_async(const std::string& host);
  void stop();

 private:
  struct Impl;
  EvaluationService& service_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evalkit
