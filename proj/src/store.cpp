#include "evalkit/store.hpp"

#include <sqlite3.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include "evalkit/hash.hpp"
#include "evalkit/stats.hpp"

namespace evalkit {

// ---------------------------------------------------------------------------
// ulid

namespace {

constexpr char kCrockford[] = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";

std::uint64_t random_word() {
  static thread_local stats::SplitMix64 gen([] {
    std::random_device rd;
    std::uint64_t seed = (std::uint64_t(rd()) << 32) ^ rd();
    seed ^= std::uint64_t(
        std::chrono::steady_clock::now().time_since_epoch().count());
    return seed;
  }());
  return gen.next();
}

}  // namespace

std::string generate_ulid() {
  std::uint64_t ms = std::uint64_t(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  unsigned char bytes[16];
  for (int i = 0; i < 6; ++i) bytes[i] = (ms >> (40 - 8 * i)) & 0xff;
  std::uint64_t r1 = random_word(), r2 = random_word();
  for (int i = 0; i < 8; ++i) bytes[6 + i] = (r1 >> (56 - 8 * i)) & 0xff;
  bytes[14] = (r2 >> 8) & 0xff;
  bytes[15] = r2 & 0xff;

  // 128 bits -> 26 base32 chars (2 leading zero bits)
  std::string out(26, '0');
  unsigned int acc = 0;
  int acc_bits = 0;
  int pos = 25;
  for (int i = 15; i >= 0; --i) {
    acc |= (unsigned int)(bytes[i]) << acc_bits;
    acc_bits += 8;
    while (acc_bits >= 5 && pos >= 0) {
      out[std::size_t(pos--)] = kCrockford[acc & 0x1f];
      acc >>= 5;
      acc_bits -= 5;
    }
  }
  if (pos == 0) out[0] = kCrockford[acc & 0x1f];
  return out;
}

// ---------------------------------------------------------------------------
// spec json

json JobSpec::to_json() const {
  json providers_json = json::array();
  for (const auto& p : providers)
    providers_json.push_back({{"name", p.name}, {"argv", p.argv}});
  return json{{"task", task},
              {"dataset", dataset_path},
              {"providers", providers_json},
              {"metrics", metrics},
              {"options", options}};
}

JobSpec JobSpec::from_json(const json& j) {
  if (!j.is_object()) raise(ErrorCode::InvalidSpec, "job spec must be an object");
  JobSpec spec;
  try {
    spec.task = j.at("task").get<std::string>();
    spec.dataset_path = j.at("dataset").get<std::string>();
    for (const auto& p : j.at("providers")) {
      ProviderSpec ps;
      ps.name = p.at("name").get<std::string>();
      ps.argv = p.at("argv").get<std::vector<std::string>>();
      if (ps.argv.empty())
        raise(ErrorCode::InvalidSpec, "provider '" + ps.name + "' has empty argv");
      spec.providers.push_back(std::move(ps));
    }
    spec.metrics = j.at("metrics").get<std::vector<std::string>>();
    spec.options = j.value("options", json::object());
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidSpec, std::string("job spec: ") + e.what());
  }
  if (spec.providers.empty())
    raise(ErrorCode::InvalidSpec, "job spec needs at least one provider");
  if (spec.metrics.empty())
    raise(ErrorCode::InvalidSpec, "job spec needs at least one metric");
  return spec;
}

std::string JobSpec::canonical_hash() const {
  // nlohmann objects serialize with sorted keys, so dump() is canonical
  return Sha256::of_string(to_json().dump());
}

const char* job_state_name(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Succeeded: return "succeeded";
    case JobState::Failed: return "failed";
  }
  return "?";
}

JobState job_state_from_name(const std::string& s) {
  if (s == "queued") return JobState::Queued;
  if (s == "running") return JobState::Running;
  if (s == "succeeded") return JobState::Succeeded;
  if (s == "failed") return JobState::Failed;
  raise(ErrorCode::Internal, "bad job state: " + s);
}

json JobRecord::to_json() const {
  return json{{"id", id},
              {"spec", spec.to_json()},
              {"state", job_state_name(state)},
              {"submitted_at", submitted_at},
              {"started_at", started_at},
              {"finished_at", finished_at},
              {"failure", failure},
              {"attempt", attempt},
              {"proposals", proposal_ids}};
}

const char* proposal_state_name(ProposalState s) {
  switch (s) {
    case ProposalState::Proposed: return "proposed";
    case ProposalState::Approved: return "approved";
    case ProposalState::Closed: return "closed";
  }
  return "?";
}

ProposalState proposal_state_from_name(const std::string& s) {
  if (s == "proposed") return ProposalState::Proposed;
  if (s == "approved") return ProposalState::Approved;
  if (s == "closed") return ProposalState::Closed;
  raise(ErrorCode::Internal, "bad proposal state: " + s);
}

json ProposalRecord::to_json() const {
  return json{{"id", id},
              {"job_id", job_id},
              {"model", model},
              {"dataset", {{"path", dataset_path}, {"sha256", dataset_hash}}},
              {"report_key", report_key},
              {"verified", verified},
              {"state", proposal_state_name(state)},
              {"source_note", source_note},
              {"created_at", created_at},
              {"decided_at", decided_at}};
}

// ---------------------------------------------------------------------------
// sqlite plumbing

namespace {

std::string now_iso() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                now.time_since_epoch())
                .count() %
            1000;
  std::ostringstream os;
  std::string base(buf);
  base.pop_back();  // strip Z, add millis
  os << base << "." << char('0' + ms / 100) << char('0' + (ms / 10) % 10)
     << char('0' + ms % 10) << "Z";
  return os.str();
}

class Stmt {
 public:
  Stmt(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      raise(ErrorCode::Internal,
            std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
  }
  ~Stmt() { sqlite3_finalize(stmt_); }

  Stmt& bind(int idx, const std::string& v) {
    sqlite3_bind_text(stmt_, idx, v.c_str(), int(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Stmt& bind(int idx, int v) {
    sqlite3_bind_int(stmt_, idx, v);
    return *this;
  }
  Stmt& bind_null(int idx) {
    sqlite3_bind_null(stmt_, idx);
    return *this;
  }
  bool step() {
    int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    raise(ErrorCode::Internal,
          std::string("sqlite step failed: ") + sqlite3_errmsg(db_));
  }
  std::string text(int col) {
    const unsigned char* v = sqlite3_column_text(stmt_, col);
    return v ? reinterpret_cast<const char*>(v) : "";
  }
  int integer(int col) { return sqlite3_column_int(stmt_, col); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

struct Store::Impl {
  sqlite3* db = nullptr;
  std::mutex mutex;  // serializes claim/submit within this process

  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown sqlite error";
      sqlite3_free(err);
      raise(ErrorCode::Internal, "sqlite exec failed: " + msg);
    }
  }
};

Store::Store(const std::filesystem::path& db_path,
             const std::filesystem::path& blob_dir)
    : impl_(std::make_unique<Impl>()), blob_dir_(blob_dir) {
  std::filesystem::create_directories(blob_dir_);
  if (db_path.has_parent_path())
    std::filesystem::create_directories(db_path.parent_path());
  if (sqlite3_open_v2(db_path.c_str(), &impl_->db,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE |
                          SQLITE_OPEN_FULLMUTEX,
                      nullptr) != SQLITE_OK)
    raise(ErrorCode::IOFailure, "cannot open database: " + db_path.string());
  sqlite3_busy_timeout(impl_->db, 10'000);
  impl_->exec("PRAGMA journal_mode=WAL;");
  impl_->exec("PRAGMA synchronous=NORMAL;");
  impl_->exec(R"(
    CREATE TABLE IF NOT EXISTS jobs (
      id TEXT PRIMARY KEY,
      spec TEXT NOT NULL,
      spec_hash TEXT NOT NULL,
      state TEXT NOT NULL,
      submitted_at TEXT NOT NULL,
      started_at TEXT NOT NULL DEFAULT '',
      finished_at TEXT NOT NULL DEFAULT '',
      failure TEXT NOT NULL DEFAULT '',
      attempt INTEGER NOT NULL DEFAULT 0
    );
    CREATE INDEX IF NOT EXISTS jobs_by_hash ON jobs(spec_hash, submitted_at);
    CREATE INDEX IF NOT EXISTS jobs_by_state ON jobs(state, submitted_at, id);
    CREATE TABLE IF NOT EXISTS proposals (
      id TEXT PRIMARY KEY,
      job_id TEXT,
      model TEXT NOT NULL,
      dataset_path TEXT NOT NULL,
      dataset_hash TEXT NOT NULL,
      report_key TEXT NOT NULL,
      verified INTEGER NOT NULL,
      state TEXT NOT NULL,
      source_note TEXT NOT NULL DEFAULT '',
      created_at TEXT NOT NULL,
      decided_at TEXT NOT NULL DEFAULT '',
      UNIQUE(job_id, model)
    );
  )");
}

Store::~Store() {
  if (impl_->db) sqlite3_close(impl_->db);
}

// ---------------------------------------------------------------------------
// jobs

std::string Store::submit_job(const JobSpec& spec, bool force_rerun) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  std::string hash = spec.canonical_hash();
  if (!force_rerun) {
    Stmt find(impl_->db,
              "SELECT id FROM jobs WHERE spec_hash=?1 ORDER BY rowid DESC LIMIT 1");
    find.bind(1, hash);
    if (find.step()) return find.text(0);
  }
  std::string id = generate_ulid();
  Stmt ins(impl_->db,
           "INSERT INTO jobs(id, spec, spec_hash, state, submitted_at) "
           "VALUES(?1, ?2, ?3, 'queued', ?4)");
  ins.bind(1, id).bind(2, spec.to_json().dump()).bind(3, hash).bind(4, now_iso());
  ins.step();
  return id;
}

namespace {

JobRecord job_from_row(Stmt& row) {
  JobRecord job;
  job.id = row.text(0);
  job.spec = JobSpec::from_json(json::parse(row.text(1)));
  job.state = job_state_from_name(row.text(2));
  job.submitted_at = row.text(3);
  job.started_at = row.text(4);
  job.finished_at = row.text(5);
  job.failure = row.text(6);
  job.attempt = row.integer(7);
  return job;
}

constexpr const char* kJobColumns =
    "id, spec, state, submitted_at, started_at, finished_at, failure, attempt";

}  // namespace

std::optional<JobRecord> Store::get_job(const std::string& id) {
  Stmt q(impl_->db, "SELECT id, spec, state, submitted_at, started_at, "
                    "finished_at, failure, attempt FROM jobs WHERE id=?1");
  q.bind(1, id);
  if (!q.step()) return std::nullopt;
  JobRecord job = job_from_row(q);
  for (const auto& p : proposals_for_job(id)) job.proposal_ids.push_back(p.id);
  return job;
}

std::vector<JobRecord> Store::list_jobs() {
  Stmt q(impl_->db, "SELECT id, spec, state, submitted_at, started_at, "
                    "finished_at, failure, attempt FROM jobs "
                    "ORDER BY rowid");
  std::vector<JobRecord> jobs;
  while (q.step()) jobs.push_back(job_from_row(q));
  return jobs;
}

std::optional<JobRecord> Store::claim_next_job() {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  std::optional<std::string> id;
  impl_->exec("BEGIN IMMEDIATE;");
  try {
    {
      // rowid is the submission order even within one millisecond
      Stmt q(impl_->db, "SELECT id FROM jobs WHERE state='queued' "
                        "ORDER BY rowid LIMIT 1");
      if (q.step()) id = q.text(0);
    }
    if (id) {
      Stmt upd(impl_->db, "UPDATE jobs SET state='running', started_at=?2, "
                          "attempt=attempt+1 WHERE id=?1");
      upd.bind(1, *id).bind(2, now_iso());
      upd.step();
    }
    impl_->exec("COMMIT;");
  } catch (...) {
    impl_->exec("ROLLBACK;");
    throw;
  }
  if (!id) return std::nullopt;
  Stmt q(impl_->db,
         (std::string("SELECT ") + kJobColumns + " FROM jobs WHERE id=?1").c_str());
  q.bind(1, *id);
  if (q.step()) return job_from_row(q);
  return std::nullopt;
}

void Store::finish_job(const std::string& id, bool success,
                       const std::string& failure_reason) {
  Stmt upd(impl_->db, "UPDATE jobs SET state=?2, finished_at=?3, failure=?4 "
                      "WHERE id=?1 AND state='running'");
  upd.bind(1, id)
      .bind(2, std::string(success ? "succeeded" : "failed"))
      .bind(3, now_iso())
      .bind(4, failure_reason);
  upd.step();
  if (sqlite3_changes(impl_->db) != 1)
    raise(ErrorCode::Internal, "finish_job: job '" + id + "' was not running");
}

int Store::recover_stale_jobs() {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  impl_->exec("BEGIN IMMEDIATE;");
  int recovered = 0;
  try {
    {
      Stmt requeue(impl_->db,
                   "UPDATE jobs SET state='queued', started_at='' "
                   "WHERE state='running' AND attempt < 2");
      requeue.step();
      recovered = sqlite3_changes(impl_->db);
    }
    {
      Stmt fail(impl_->db,
                "UPDATE jobs SET state='failed', finished_at=?1, "
                "failure='worker crashed repeatedly' "
                "WHERE state='running'");
      fail.bind(1, now_iso());
      fail.step();
    }
    impl_->exec("COMMIT;");
  } catch (...) {
    impl_->exec("ROLLBACK;");
    throw;
  }
  return recovered;
}

// ---------------------------------------------------------------------------
// blobs

std::string Store::put_blob(const std::string& content) {
  std::string key = Sha256::of_string(content);
  auto path = blob_dir_ / key;
  if (!std::filesystem::exists(path)) {
    auto tmp = blob_dir_ / (key + ".tmp." + generate_ulid());
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::IOFailure, "cannot write blob " + tmp.string());
    out << content;
    out.flush();
    if (!out) raise(ErrorCode::IOFailure, "blob write failed: " + tmp.string());
    out.close();
    std::filesystem::rename(tmp, path);
  }
  return key;
}

std::string Store::get_blob(const std::string& key) {
  auto path = blob_dir_ / key;
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::NotFound, "no blob " + key);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// ---------------------------------------------------------------------------
// proposals

namespace {

ProposalRecord proposal_from_row(Stmt& row) {
  ProposalRecord p;
  p.id = row.text(0);
  p.job_id = row.text(1);
  p.model = row.text(2);
  p.dataset_path = row.text(3);
  p.dataset_hash = row.text(4);
  p.report_key = row.text(5);
  p.verified = row.integer(6) != 0;
  p.state = proposal_state_from_name(row.text(7));
  p.source_note = row.text(8);
  p.created_at = row.text(9);
  p.decided_at = row.text(10);
  return p;
}

constexpr const char* kProposalSelect =
    "SELECT id, job_id, model, dataset_path, dataset_hash, report_key, "
    "verified, state, source_note, created_at, decided_at FROM proposals";

}  // namespace

std::string Store::create_proposal(const std::string& job_id,
                                   const std::string& model,
                                   const std::string& dataset_path,
                                   const std::string& dataset_hash,
                                   const std::string& report_key, bool verified,
                                   const std::string& source_note) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  if (!job_id.empty()) {
    Stmt find(impl_->db,
              "SELECT id FROM proposals WHERE job_id=?1 AND model=?2");
    find.bind(1, job_id).bind(2, model);
    if (find.step()) return find.text(0);  // idempotent per (job, model)
  }
  std::string id = generate_ulid();
  Stmt ins(impl_->db,
           "INSERT INTO proposals(id, job_id, model, dataset_path, dataset_hash, "
           "report_key, verified, state, source_note, created_at) "
           "VALUES(?1, ?2, ?3, ?4, ?5, ?6, ?7, 'proposed', ?8, ?9)");
  ins.bind(1, id);
  // NULL job_id keeps self-reported imports out of the (job, model)
  // uniqueness constraint
  if (job_id.empty())
    ins.bind_null(2);
  else
    ins.bind(2, job_id);
  ins.bind(3, model).bind(4, dataset_path).bind(5, dataset_hash)
      .bind(6, report_key)
      .bind(7, verified ? 1 : 0)
      .bind(8, source_note)
      .bind(9, now_iso());
  ins.step();
  return id;
}

std::optional<ProposalRecord> Store::get_proposal(const std::string& id) {
  Stmt q(impl_->db, (std::string(kProposalSelect) + " WHERE id=?1").c_str());
  q.bind(1, id);
  if (!q.step()) return std::nullopt;
  return proposal_from_row(q);
}

std::vector<ProposalRecord> Store::list_proposals() {
  Stmt q(impl_->db,
         (std::string(kProposalSelect) + " ORDER BY created_at, id").c_str());
  std::vector<ProposalRecord> out;
  while (q.step()) out.push_back(proposal_from_row(q));
  return out;
}

std::vector<ProposalRecord> Store::proposals_for_job(const std::string& job_id) {
  Stmt q(impl_->db,
         (std::string(kProposalSelect) + " WHERE job_id=?1 ORDER BY id").c_str());
  q.bind(1, job_id);
  std::vector<ProposalRecord> out;
  while (q.step()) out.push_back(proposal_from_row(q));
  return out;
}

ProposalRecord Store::decide_proposal(const std::string& id, bool approve) {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  auto existing = get_proposal(id);
  if (!existing) raise(ErrorCode::NotFound, "no proposal '" + id + "'");
  if (existing->state != ProposalState::Proposed)
    raise(ErrorCode::AlreadyDecided,
          "proposal '" + id + "' is already " +
              proposal_state_name(existing->state));
  Stmt upd(impl_->db, "UPDATE proposals SET state=?2, decided_at=?3 "
                      "WHERE id=?1 AND state='proposed'");
  upd.bind(1, id)
      .bind(2, std::string(approve ? "approved" : "closed"))
      .bind(3, now_iso());
  upd.step();
  if (sqlite3_changes(impl_->db) != 1)
    raise(ErrorCode::AlreadyDecided, "proposal '" + id + "' was decided concurrently");
  return *get_proposal(id);
}

}  // namespace evalkit
