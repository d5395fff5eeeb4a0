#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evalkit/error.hpp"

namespace evalkit {

using json = nlohmann::json;

std::string generate_ulid();  // 26-char Crockford base32, time-ordered

struct ProviderSpec {
  std::string name;
  std::vector<std::string> argv;
};

struct JobSpec {
  std::string task;
  std::string dataset_path;
  std::vector<ProviderSpec> providers;
  std::vector<std::string> metrics;
  json options = json::object();  // ci, seed, batch_size

  json to_json() const;
  static JobSpec from_json(const json& j);  // throws InvalidSpec
  std::string canonical_hash() const;
};

enum class JobState { Queued, Running, Succeeded, Failed };
const char* job_state_name(JobState s);
JobState job_state_from_name(const std::string& s);

struct JobRecord {
  std::string id;
  JobSpec spec;
  JobState state = JobState::Queued;
  std::string submitted_at;
  std::string started_at;
  std::string finished_at;
  std::string failure;
  int attempt = 0;
  std::vector<std::string> proposal_ids;

  json to_json() const;
};

enum class ProposalState { Proposed, Approved, Closed };
const char* proposal_state_name(ProposalState s);
ProposalState proposal_state_from_name(const std::string& s);

struct ProposalRecord {
  std::string id;
  std::string job_id;  // empty for imported self-reported results
  std::string model;
  std::string dataset_path;
  std::string dataset_hash;
  std::string report_key;  // blob key of the EvaluationReport json
  bool verified = false;
  ProposalState state = ProposalState::Proposed;
  std::string source_note;
  std::string created_at;
  std::string decided_at;

  json to_json() const;
};

// Single-file SQLite store plus a content-addressed blob directory.
// All mutations are transactional; job claiming is mutually exclusive
// across workers and processes.
class Store {
 public:
  Store(const std::filesystem::path& db_path,
        const std::filesystem::path& blob_dir);
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // jobs
  std::string submit_job(const JobSpec& spec, bool force_rerun = false);
  std::optional<JobRecord> get_job(const std::string& id);
  std::vector<JobRecord> list_jobs();
  // FIFO claim: queued -> running, attempt incremented
  std::optional<JobRecord> claim_next_job();
  void finish_job(const std::string& id, bool success,
                  const std::string& failure_reason);
  // running jobs found at startup: requeued once, failed after that
  int recover_stale_jobs();

  // blobs
  std::string put_blob(const std::string& content);  // returns sha256 key
  std::string get_blob(const std::string& key);      // NotFound

  // proposals; creation is idempotent per (job_id, model)
  std::string create_proposal(const std::string& job_id, const std::string& model,
                              const std::string& dataset_path,
                              const std::string& dataset_hash,
                              const std::string& report_key, bool verified,
                              const std::string& source_note);
  std::optional<ProposalRecord> get_proposal(const std::string& id);
  std::vector<ProposalRecord> list_proposals();
  std::vector<ProposalRecord> proposals_for_job(const std::string& job_id);
  // proposed -> approved/closed exactly once; NotFound / AlreadyDecided
  ProposalRecord decide_proposal(const std::string& id, bool approve);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::filesystem::path blob_dir_;
};

}  // namespace evalkit
