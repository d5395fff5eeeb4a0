#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <cstdlib>

#include "evalkit/jsonl.hpp"
#include "evalkit/service.hpp"

using namespace evalkit;

namespace {

struct TempService {
  std::filesystem::path root;
  std::filesystem::path dataset;
  std::unique_ptr<EvaluationService> service;

  explicit TempService(const std::string& tag, int dataset_rows = 8,
                       int workers = 1) {
    root = std::filesystem::temp_directory_path() /
           ("evalkit-svc-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);

    std::vector<json> rows;
    for (int i = 0; i < dataset_rows; ++i) {
      int label = i % 2;
      rows.push_back(json{{"text", std::to_string(label)}, {"label", label}});
    }
    dataset = root / "dataset.jsonl";
    write_jsonl(dataset, rows);

    ServiceConfig config;
    config.db_path = root / "service.db";
    config.blob_dir = root / "blobs";
    config.owner_tokens = {{"acme/", "token-acme"}, {"zeta/", "token-zeta"}};
    config.worker_count = workers;
    service = std::make_unique<EvaluationService>(std::move(config));
  }

  ~TempService() {
    service.reset();
    std::filesystem::remove_all(root);
  }

  JobSpec spec(const std::string& model = "acme/echo") {
    JobSpec s;
    s.task = "text-classification";
    s.dataset_path = dataset.string();
    s.providers = {{model, {std::getenv("DUMMY_PROVIDER_BIN"), "--mode", "echo-int"}}};
    s.metrics = {"accuracy"};
    return s;
  }
};

}  // namespace

TEST_CASE("ulids are 26 chars of crockford base32 and time-ordered") {
  std::string a = generate_ulid();
  std::string b = generate_ulid();
  CHECK(a.size() == 26);
  CHECK(b.size() == 26);
  CHECK(a != b);
  const std::string alphabet = "0123456789ABCDEFGHJKMNPQRSTVWXYZ";
  for (char c : a) CHECK(alphabet.find(c) != std::string::npos);
  // same millisecond or later: time prefix is non-decreasing
  CHECK(a.substr(0, 10) <= b.substr(0, 10));
}

TEST_CASE("submitting the same spec twice returns the same job") {
  TempService t("idem");
  std::string first = t.service->submit_job(t.spec());
  std::string second = t.service->submit_job(t.spec());
  CHECK(first == second);
  CHECK(first.size() == 26);
  CHECK(t.service->get_job(first).state == JobState::Queued);

  std::string forced = t.service->submit_job(t.spec(), /*force_rerun=*/true);
  CHECK(forced != first);
}

TEST_CASE("submit validates task, metrics, and dataset") {
  TempService t("validate");

  JobSpec bad_task = t.spec();
  bad_task.task = "image-classification";
  try {
    t.service->submit_job(bad_task);
    FAIL("expected InvalidSpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
  }

  JobSpec bad_metric = t.spec();
  bad_metric.metrics = {"accuracy", "made_up_metric"};
  try {
    t.service->submit_job(bad_metric);
    FAIL("expected InvalidSpec");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidSpec);
    CHECK(e.message().find("made_up_metric") != std::string::npos);
  }

  JobSpec bad_dataset = t.spec();
  bad_dataset.dataset_path = "/nonexistent/data.jsonl";
  try {
    t.service->submit_job(bad_dataset);
    FAIL("expected DatasetUnreadable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DatasetUnreadable);
  }
}

TEST_CASE("worker executes a job into a verified proposal") {
  TempService t("happy");
  std::string job_id = t.service->submit_job(t.spec());
  CHECK(t.service->run_worker_drain() == 1);

  JobRecord job = t.service->get_job(job_id);
  CHECK(job.state == JobState::Succeeded);
  REQUIRE(job.proposal_ids.size() == 1);

  ProposalRecord proposal = t.service->get_proposal(job.proposal_ids[0]);
  CHECK(proposal.state == ProposalState::Proposed);
  CHECK(proposal.verified);
  CHECK(proposal.model == "acme/echo");

  json report = t.service->proposal_report(proposal);
  CHECK(report["metrics"][0]["values"]["accuracy"] == 1.0);
  CHECK(report["predictions_artifact"].get<std::string>().rfind("blob:", 0) == 0);

  // artifact content is in the blob store, one row per example
  std::string artifact_key =
      report["predictions_artifact"].get<std::string>().substr(5);
  std::string artifact = t.service->store().get_blob(artifact_key);
  CHECK(std::count(artifact.begin(), artifact.end(), '\n') == 8);
}

TEST_CASE("a crashing provider fails the job with captured stderr") {
  TempService t("crash");
  JobSpec spec = t.spec();
  spec.providers[0].argv = {std::getenv("DUMMY_PROVIDER_BIN"), "--mode", "crash",
                            "--after", "1"};
  std::string job_id = t.service->submit_job(spec);
  t.service->run_worker_drain();
  JobRecord job = t.service->get_job(job_id);
  CHECK(job.state == JobState::Failed);
  CHECK(job.failure.find("simulated crash") != std::string::npos);
  CHECK(job.proposal_ids.empty());
}

TEST_CASE("jobs claimed but never finished are requeued exactly once") {
  TempService t("recover");
  std::string job_id = t.service->submit_job(t.spec());

  auto& store = t.service->store();
  auto claimed = store.claim_next_job();
  REQUIRE(claimed.has_value());
  CHECK(claimed->id == job_id);
  CHECK(claimed->attempt == 1);

  // simulate a worker crash: nothing finished the job
  CHECK(store.recover_stale_jobs() == 1);
  CHECK(t.service->get_job(job_id).state == JobState::Queued);

  auto reclaimed = store.claim_next_job();
  REQUIRE(reclaimed.has_value());
  CHECK(reclaimed->attempt == 2);

  // a second crash exhausts the retry budget
  CHECK(store.recover_stale_jobs() == 0);
  JobRecord job = t.service->get_job(job_id);
  CHECK(job.state == JobState::Failed);
  CHECK(job.failure.find("crashed") != std::string::npos);
}

TEST_CASE("claim order is FIFO by submission") {
  TempService t("fifo");
  JobSpec a = t.spec("acme/a");
  JobSpec b = t.spec("acme/b");
  std::string id_a = t.service->submit_job(a);
  std::string id_b = t.service->submit_job(b);
  auto first = t.service->store().claim_next_job();
  auto second = t.service->store().claim_next_job();
  REQUIRE(first.has_value());
  REQUIRE(second.has_value());
  CHECK(first->id == id_a);
  CHECK(second->id == id_b);
  CHECK(!t.service->store().claim_next_job().has_value());
}

TEST_CASE("proposal creation is idempotent per job and model") {
  TempService t("idem-prop");
  auto& store = t.service->store();
  std::string key = store.put_blob("{}");
  std::string p1 = store.create_proposal("job-1", "acme/m", "d", "h", key, true, "");
  std::string p2 = store.create_proposal("job-1", "acme/m", "d", "h", key, true, "");
  std::string p3 = store.create_proposal("job-1", "acme/other", "d", "h", key, true, "");
  CHECK(p1 == p2);
  CHECK(p1 != p3);

  // self-reported entries never collide through the constraint
  std::string s1 = store.create_proposal("", "acme/m", "d", "h", key, false, "a");
  std::string s2 = store.create_proposal("", "acme/m", "d", "h", key, false, "b");
  CHECK(s1 != s2);
}

TEST_CASE("blobs are content-addressed") {
  TempService t("blobs");
  auto& store = t.service->store();
  std::string k1 = store.put_blob("hello");
  std::string k2 = store.put_blob("hello");
  CHECK(k1 == k2);
  CHECK(store.get_blob(k1) == "hello");
  try {
    store.get_blob(std::string(64, '0'));
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotFound);
  }
}

TEST_CASE("review flow: approve, close, double-decide, authorization") {
  TempService t("review");
  t.service->submit_job(t.spec());
  t.service->run_worker_drain();
  std::string proposal_id =
      t.service->get_job(t.service->submit_job(t.spec())).proposal_ids[0];

  try {
    t.service->review_proposal(proposal_id, true, "wrong-token");
    FAIL("expected Unauthorized");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Unauthorized);
  }
  CHECK(t.service->get_proposal(proposal_id).state == ProposalState::Proposed);

  ProposalRecord approved =
      t.service->review_proposal(proposal_id, true, "token-acme");
  CHECK(approved.state == ProposalState::Approved);
  CHECK(!approved.decided_at.empty());

  try {
    t.service->review_proposal(proposal_id, false, "token-acme");
    FAIL("expected AlreadyDecided");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AlreadyDecided);
  }

  try {
    t.service->review_proposal("01INVALIDULID0000000000000", true, "token-acme");
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotFound);
  }
}

TEST_CASE("leaderboard ranks by direction with verified tie-break") {
  TempService t("board");
  // one verified result through the worker
  std::string job_id = t.service->submit_job(t.spec());
  t.service->run_worker_drain();

  // self-reported results around it
  t.service->import_self_reported("zeta/better", t.dataset.string(), "accuracy",
                                  1.0, "paper table 3");
  t.service->import_self_reported("zeta/worse", t.dataset.string(), "accuracy",
                                  0.25, "paper table 3");

  LeaderboardQuery query;
  query.dataset = t.dataset.string();
  query.metric_key = "accuracy";
  auto rows = t.service->leaderboard(query);
  REQUIRE(rows.size() == 3);

  // verified 1.0 beats self-reported 1.0 on the tie-break
  CHECK(rows[0].model == "acme/echo");
  CHECK(rows[0].verified);
  CHECK(rows[0].rank == 1);
  CHECK(rows[1].model == "zeta/better");
  CHECK(!rows[1].verified);
  CHECK(rows[2].model == "zeta/worse");
  CHECK(rows[2].value == 0.25);

  // verified-only filter
  query.verified_only = true;
  auto verified_rows = t.service->leaderboard(query);
  REQUIRE(verified_rows.size() == 1);
  CHECK(verified_rows[0].model == "acme/echo");

  // inserting an unrelated proposal does not reorder existing entries
  query.verified_only = false;
  t.service->import_self_reported("zeta/mid", t.dataset.string(), "accuracy",
                                  0.5, "");
  auto rows2 = t.service->leaderboard(query);
  REQUIRE(rows2.size() == 4);
  CHECK(rows2[0].model == rows[0].model);
  CHECK(rows2[1].model == rows[1].model);
  CHECK(rows2[3].model == rows[2].model);
  (void)job_id;
}

TEST_CASE("lower-is-better metrics rank ascending") {
  TempService t("ppl");
  t.service->import_self_reported("acme/a", "d.jsonl", "mean_perplexity", 12.0, "");
  t.service->import_self_reported("acme/b", "d.jsonl", "mean_perplexity", 7.5, "");
  LeaderboardQuery query;
  query.dataset = "d.jsonl";
  query.metric_key = "mean_perplexity";
  auto rows = t.service->leaderboard(query);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model == "acme/b");
  CHECK(rows[0].value == 7.5);
}

TEST_CASE("metric keys without a declared direction are refused") {
  TempService t("nodir");
  LeaderboardQuery query;
  query.metric_key = "p_value";  // statistic without higher-is-better
  try {
    t.service->leaderboard(query);
    FAIL("expected UnknownMetricDirection");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownMetricDirection);
  }
}

TEST_CASE("closed proposals stay queryable but leave default boards") {
  TempService t("closed");
  auto proposal = t.service->import_self_reported("acme/closed", "d.jsonl",
                                                  "accuracy", 0.9, "");
  t.service->review_proposal(proposal.id, /*approve=*/false, "token-acme");

  ProposalRecord still_there = t.service->get_proposal(proposal.id);
  CHECK(still_there.state == ProposalState::Closed);
  json report = t.service->proposal_report(still_there);
  CHECK(report["metrics"][0]["values"]["accuracy"] == 0.9);

  LeaderboardQuery query;
  query.dataset = "d.jsonl";
  query.metric_key = "accuracy";
  CHECK(t.service->leaderboard(query).empty());
  query.include_closed = true;
  auto rows = t.service->leaderboard(query);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].state == ProposalState::Closed);
}

TEST_CASE("self-reported import validates value and metric key") {
  TempService t("import");
  try {
    t.service->import_self_reported("m", "d", "accuracy",
                                    std::nan(""), "");
    FAIL("expected InvalidValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidValue);
  }
  try {
    t.service->import_self_reported("m", "d", "made_up_key", 0.5, "");
    FAIL("expected UnknownMetric");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownMetric);
  }
  ProposalRecord ok =
      t.service->import_self_reported("m", "d", "accuracy", 0.88, "readme");
  CHECK(!ok.verified);
  CHECK(ok.state == ProposalState::Proposed);
  CHECK(ok.source_note == "readme");
}

TEST_CASE("rerunning the same spec reproduces metric values exactly") {
  TempService t("rerun");
  std::string first_id = t.service->submit_job(t.spec());
  t.service->run_worker_drain();
  std::string second_id = t.service->submit_job(t.spec(), /*force_rerun=*/true);
  t.service->run_worker_drain();
  REQUIRE(first_id != second_id);

  auto report_of = [&](const std::string& job_id) {
    JobRecord job = t.service->get_job(job_id);
    REQUIRE(job.state == JobState::Succeeded);
    return t.service->proposal_report(
        t.service->get_proposal(job.proposal_ids[0]));
  };
  json a = report_of(first_id);
  json b = report_of(second_id);
  CHECK(a["metrics"] == b["metrics"]);
  CHECK(a["dataset"]["sha256"] == b["dataset"]["sha256"]);
}

TEST_CASE("model card metadata lists only approved results") {
  TempService t("card");
  auto p1 = t.service->import_self_reported("acme/m", "d", "accuracy", 0.8, "");
  auto p2 = t.service->import_self_reported("acme/m", "d", "f1", 0.7, "");
  t.service->review_proposal(p1.id, true, "token-acme");
  t.service->review_proposal(p2.id, false, "token-acme");

  json card = t.service->model_card_metadata("acme/m");
  CHECK(card["model"] == "acme/m");
  REQUIRE(card["results"].size() == 1);
  CHECK(card["results"][0]["proposal_id"] == p1.id);
}

TEST_CASE("http surface round-trips the whole flow") {
  TempService t("http");
  ServiceHttp http(*t.service);
  int port = http.listen_async("127.0.0.1");
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);

  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);

  // submit over http
  json body = t.spec().to_json();
  auto submitted = client.Post("/jobs", body.dump(), "application/json");
  REQUIRE(submitted);
  REQUIRE(submitted->status == 200);
  std::string job_id = json::parse(submitted->body)["id"];

  t.service->run_worker_drain();

  auto job = client.Get("/jobs/" + job_id);
  REQUIRE(job);
  json job_json = json::parse(job->body);
  CHECK(job_json["state"] == "succeeded");
  std::string proposal_id = job_json["proposals"][0];

  auto proposal = client.Get("/proposals/" + proposal_id);
  REQUIRE(proposal);
  CHECK(json::parse(proposal->body)["report"]["metrics"][0]["values"]["accuracy"] == 1.0);

  // bad token -> 403, good token -> approved
  auto denied = client.Post("/proposals/" + proposal_id + "/review",
                            json{{"decision", "approve"}, {"token", "nope"}}.dump(),
                            "application/json");
  REQUIRE(denied);
  CHECK(denied->status == 403);
  auto approved = client.Post(
      "/proposals/" + proposal_id + "/review",
      json{{"decision", "approve"}, {"token", "token-acme"}}.dump(),
      "application/json");
  REQUIRE(approved);
  CHECK(approved->status == 200);
  CHECK(json::parse(approved->body)["state"] == "approved");

  auto board = client.Get("/leaderboards?metric=accuracy");
  REQUIRE(board);
  json entries = json::parse(board->body)["entries"];
  REQUIRE(entries.size() == 1);
  CHECK(entries[0]["model"] == "acme/echo");
  CHECK(entries[0]["rank"] == 1);

  auto missing = client.Get("/jobs/01NOTAREALJOBID00000000000");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  auto imported = client.Post(
      "/results/self-reported",
      json{{"model", "zeta/ext"}, {"dataset", "d"}, {"metric", "accuracy"},
           {"value", 0.5}, {"source", "blog"}}.dump(),
      "application/json");
  REQUIRE(imported);
  CHECK(imported->status == 200);
  CHECK(json::parse(imported->body)["verified"] == false);

  auto metadata = client.Get("/models/acme/echo/card-metadata");
  REQUIRE(metadata);
  CHECK(json::parse(metadata->body)["results"].size() == 1);

  http.stop();
}

TEST_CASE("two workers never run the same job") {
  TempService t("workers", 6, /*workers=*/2);
  std::vector<std::string> job_ids;
  for (int i = 0; i < 6; ++i)
    job_ids.push_back(t.service->submit_job(t.spec("acme/m" + std::to_string(i))));

  t.service->start_workers();
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
  for (;;) {
    bool done = true;
    for (const auto& id : job_ids) {
      JobState state = t.service->get_job(id).state;
      done = done && (state == JobState::Succeeded || state == JobState::Failed);
    }
    if (done) break;
    REQUIRE(std::chrono::steady_clock::now() < deadline);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  t.service->stop_workers();

  for (const auto& id : job_ids) {
    JobRecord job = t.service->get_job(id);
    CHECK(job.state == JobState::Succeeded);
    CHECK(job.attempt == 1);  // claimed exactly once
    CHECK(job.proposal_ids.size() == 1);
  }
}

TEST_CASE("job state machine never skips or reverses under random events") {
  TempService t("fsm");
  auto& store = t.service->store();
  stats::SplitMix64 gen(8080);

  // legal edges: queued->running (claim), running->succeeded|failed
  // (finish), running->queued or running->failed (recover)
  auto legal = [](JobState from, JobState to) {
    if (from == to) return true;
    switch (from) {
      case JobState::Queued: return to == JobState::Running;
      case JobState::Running: return true;  // any of the three exits
      case JobState::Succeeded:
      case JobState::Failed: return false;  // terminal
    }
    return false;
  };

  std::vector<std::string> job_ids;
  std::map<std::string, JobState> last_seen;
  auto observe = [&] {
    for (const auto& id : job_ids) {
      JobState now = t.service->get_job(id).state;
      REQUIRE(legal(last_seen[id], now));
      last_seen[id] = now;
    }
  };

  int submitted = 0;
  for (int event = 0; event < 200; ++event) {
    switch (gen.next() % 4) {
      case 0: {  // submit a fresh job
        JobSpec spec = t.spec("acme/fsm" + std::to_string(submitted++));
        std::string id = store.submit_job(spec);
        if (!last_seen.count(id)) {
          job_ids.push_back(id);
          last_seen[id] = JobState::Queued;
        }
        break;
      }
      case 1: {  // claim
        (void)store.claim_next_job();
        break;
      }
      case 2: {  // finish a running job, if any
        for (const auto& job : store.list_jobs()) {
          if (job.state == JobState::Running) {
            store.finish_job(job.id, gen.next() % 2 == 0, "fsm probe");
            break;
          }
        }
        break;
      }
      case 3: {  // worker restart
        store.recover_stale_jobs();
        break;
      }
    }
    observe();
  }

  // finishing a non-running job is rejected outright
  std::string fresh = store.submit_job(t.spec("acme/fsm-final"));
  CHECK_THROWS_AS(store.finish_job(fresh, true, ""), Error);
  CHECK(t.service->get_job(fresh).state == JobState::Queued);
}
