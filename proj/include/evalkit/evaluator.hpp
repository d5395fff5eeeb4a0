#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "evalkit/module.hpp"
#include "evalkit/registry.hpp"
#include "evalkit/stats.hpp"

namespace evalkit {

// Task-specific pre/post-processing: dataset columns, request inputs, and
// how raw provider predictions become metric-ready rows.
struct TaskSpec {
  std::string id;
  FeatureSchema dataset_schema;
  std::vector<std::string> input_columns;
  std::string reference_column;
  std::vector<std::string> default_metrics;
  // per-metric parameter overrides applied at compute time
  std::map<std::string, json> metric_params;
  // schema of the rows metrics see after postprocessing
  FeatureSchema metric_row_schema;
};

const std::vector<std::string>& known_task_ids();
TaskSpec task_spec(const std::string& task_id);  // throws InvalidSpec

// Wire protocol (one JSON object per line, LF-terminated):
//   evaluator -> provider
//     {"type":"hello","protocol":"evalkit-provider/1","task":<id>,"batch_size":B}
//     {"type":"request","id":<n>,"inputs":{...}}        (up to B per batch)
//     {"type":"flush"}                                  (ends each batch)
//     {"type":"shutdown"}
//   provider -> evaluator
//     {"type":"ready","model":<name>}
//     {"type":"response","id":<n>,"prediction":<json>}
//     {"type":"response","id":<n>,"error":<message>}
// A provider may answer per request or buffer until the flush marker.
// Responses may arrive out of order within a batch; each request id must
// be answered exactly once.
class PredictionProvider {
 public:
  using InProcessFn = std::function<json(const json& inputs)>;

  static PredictionProvider subprocess(std::vector<std::string> argv,
                                       int timeout_ms = 30'000);
  static PredictionProvider in_process(std::string model_name, InProcessFn fn);

  void start(const std::string& task_id, std::size_t batch_size);
  // requests are (id, inputs); returns id -> prediction
  std::map<std::uint64_t, json> predict_batch(
      const std::vector<std::pair<std::uint64_t, json>>& requests);
  void finish();

  const std::string& model_name() const { return model_name_; }
  std::string describe() const;
  int timeout_ms() const { return timeout_ms_; }

  ~PredictionProvider();
  PredictionProvider(PredictionProvider&&) noexcept;
  PredictionProvider& operator=(PredictionProvider&&) noexcept;
  PredictionProvider(const PredictionProvider&) = delete;
  PredictionProvider& operator=(const PredictionProvider&) = delete;

 private:
  PredictionProvider() = default;

  std::vector<std::string> argv_;
  InProcessFn fn_;
  std::string model_name_;
  int timeout_ms_ = 30'000;
  std::unique_ptr<class LineProcess> process_;
};

struct BatchTiming {
  std::size_t batch_size = 0;
  double duration_s = 0.0;
};

struct PerfStats {
  double total_time_s = 0.0;
  double throughput = 0.0;  // examples per second
  double latency_mean_ms = 0.0;
  double latency_p50_ms = 0.0;
  double latency_p90_ms = 0.0;
  double latency_p99_ms = 0.0;
  double latency_max_ms = 0.0;
  std::uint64_t n_examples = 0;
  std::uint64_t batch_size = 0;

  json to_json() const;
  static PerfStats from_json(const json& j);
};

// Per-example latency is batch duration / batch size; percentiles are
// nearest-rank over the per-example latencies.
PerfStats measure_perf(const std::vector<BatchTiming>& timings);

struct EvaluateOptions {
  std::size_t batch_size = 8;
  bool ci = false;
  double ci_level = 0.95;
  std::uint64_t ci_iterations = 1000;
  std::uint64_t seed = 42;
  std::filesystem::path artifact_dir;  // default: a fresh temp directory
  std::map<std::string, std::int64_t> label_map;  // string label -> id
};

struct EvaluationReport {
  std::string task_id;
  std::string dataset_path;
  std::string dataset_hash;  // sha256 of the dataset file bytes
  std::string provider;      // command line or in-process name
  std::string model_name;    // declared in the provider handshake
  std::vector<ModuleResult> metric_results;
  // key "<module_id>/<score_key>"
  std::map<std::string, stats::ConfidenceInterval> confidence_intervals;
  PerfStats perf;
  std::string predictions_artifact;  // path to the persisted predictions
  std::uint64_t seed = 0;
  std::string timestamp;  // ISO 8601 UTC

  json to_json() const;
  static EvaluationReport from_json(const json& j);
};

EvaluationReport evaluate_task(const TaskSpec& task,
                               const std::filesystem::path& dataset_path,
                               PredictionProvider& provider,
                               const std::vector<std::string>& metric_ids,
                               const Registry& registry,
                               const EvaluateOptions& options = {});

// Rebuilds metric-ready rows from a predictions artifact and recomputes
// the given metrics; used to verify report fidelity offline.
std::vector<ModuleResult> recompute_from_artifact(
    const std::filesystem::path& artifact_path, const TaskSpec& task,
    const std::vector<std::string>& metric_ids, const Registry& registry);

}  // namespace evalkit
