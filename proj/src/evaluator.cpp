#include "evalkit/evaluator.hpp"

#include <algorithm>
#include <unistd.h>

#include <atomic>

#include <chrono>
#include <cmath>
#include <ctime>
#include <set>
#include <sstream>

#include "evalkit/hash.hpp"
#include "evalkit/jsonl.hpp"
#include "evalkit/subprocess.hpp"

namespace evalkit {

namespace {

constexpr const char* kProviderProtocol = "evalkit-provider/1";

std::string iso_timestamp_utc() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// tasks

const std::vector<std::string>& known_task_ids() {
  static const std::vector<std::string> ids = {
      "text-classification", "token-classification",
      "question-answering-extractive"};
  return ids;
}

TaskSpec task_spec(const std::string& task_id) {
  if (task_id == "text-classification") {
    TaskSpec t;
    t.id = task_id;
    t.dataset_schema = {{"text", ColumnType::String}, {"label", ColumnType::Int}};
    t.input_columns = {"text"};
    t.reference_column = "label";
    t.default_metrics = {"accuracy"};
    t.metric_row_schema = {{"predictions", ColumnType::Int},
                           {"references", ColumnType::Int}};
    return t;
  }
  if (task_id == "token-classification") {
    // minimal support: token-level tags scored as flattened exact matches
    TaskSpec t;
    t.id = task_id;
    t.dataset_schema = {{"tokens", ColumnType::StringSeq},
                        {"tags", ColumnType::StringSeq}};
    t.input_columns = {"tokens"};
    t.reference_column = "tags";
    t.default_metrics = {"exact_match"};
    t.metric_row_schema = {{"predictions", ColumnType::String},
                           {"references", ColumnType::String}};
    return t;
  }
  if (task_id == "question-answering-extractive") {
    TaskSpec t;
    t.id = task_id;
    t.dataset_schema = {{"question", ColumnType::String},
                        {"context", ColumnType::String},
                        {"answer", ColumnType::String}};
    t.input_columns = {"question", "context"};
    t.reference_column = "answer";
    t.default_metrics = {"exact_match"};
    t.metric_params["exact_match"] = json{{"normalize", "casefold_strip"}};
    t.metric_row_schema = {{"predictions", ColumnType::String},
                           {"references", ColumnType::String}};
    return t;
  }
  raise(ErrorCode::InvalidSpec, "unknown task '" + task_id + "'");
}

// ---------------------------------------------------------------------------
// provider

PredictionProvider::~PredictionProvider() = default;
PredictionProvider::PredictionProvider(PredictionProvider&&) noexcept = default;
PredictionProvider& PredictionProvider::operator=(PredictionProvider&&) noexcept =
    default;

PredictionProvider PredictionProvider::subprocess(std::vector<std::string> argv,
                                                  int timeout_ms) {
  PredictionProvider p;
  p.argv_ = std::move(argv);
  p.timeout_ms_ = timeout_ms;
  return p;
}

PredictionProvider PredictionProvider::in_process(std::string model_name,
                                                  InProcessFn fn) {
  PredictionProvider p;
  p.model_name_ = std::move(model_name);
  p.fn_ = std::move(fn);
  return p;
}

std::string PredictionProvider::describe() const {
  if (fn_) return "in-process:" + model_name_;
  std::string joined;
  for (std::size_t i = 0; i < argv_.size(); ++i)
    joined += (i ? " " : "") + argv_[i];
  return joined;
}

void PredictionProvider::start(const std::string& task_id,
                               std::size_t batch_size) {
  if (fn_) return;
  process_ = std::make_unique<LineProcess>(argv_);
  json hello{{"type", "hello"},
             {"protocol", kProviderProtocol},
             {"task", task_id},
             {"batch_size", batch_size}};
  process_->write_line(hello.dump());
  auto line = process_->read_line(timeout_ms_);
  if (!line)
    raise(ErrorCode::ProviderCrash,
          "provider exited during handshake; stderr: " + process_->stderr_text());
  json ready = json::parse(*line, nullptr, false);
  if (ready.is_discarded() || ready.value("type", "") != "ready")
    raise(ErrorCode::ProviderProtocolViolation,
          "expected a ready line, got: " + *line);
  model_name_ = ready.value("model", "unnamed");
}

std::map<std::uint64_t, json> PredictionProvider::predict_batch(
    const std::vector<std::pair<std::uint64_t, json>>& requests) {
  std::map<std::uint64_t, json> responses;
  if (fn_) {
    for (const auto& [id, inputs] : requests) responses[id] = fn_(inputs);
    return responses;
  }
  if (!process_) raise(ErrorCode::Internal, "provider not started");

  std::set<std::uint64_t> outstanding;
  for (const auto& [id, inputs] : requests) {
    json req{{"type", "request"}, {"id", id}, {"inputs", inputs}};
    process_->write_line(req.dump());
    outstanding.insert(id);
  }
  process_->write_line(R"({"type":"flush"})");
  // the timeout covers the whole batch, not each response line
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(timeout_ms_);
  while (!outstanding.empty()) {
    int remaining_ms = int(std::chrono::duration_cast<std::chrono::milliseconds>(
                               deadline - std::chrono::steady_clock::now())
                               .count());
    if (remaining_ms <= 0)
      raise(ErrorCode::ResponseTimeout,
            "batch exceeded " + std::to_string(timeout_ms_) + " ms");
    auto line = process_->read_line(remaining_ms);
    if (!line)
      raise(ErrorCode::ProviderCrash,
            "provider exited mid-batch; stderr: " + process_->stderr_text());
    json resp = json::parse(*line, nullptr, false);
    if (resp.is_discarded() || resp.value("type", "") != "response" ||
        !resp.contains("id") || !resp["id"].is_number_unsigned())
      raise(ErrorCode::ProviderProtocolViolation,
            "malformed response line: " + *line);
    std::uint64_t id = resp["id"].get<std::uint64_t>();
    if (responses.count(id))
      raise(ErrorCode::ProviderProtocolViolation,
            "duplicate response id " + std::to_string(id));
    if (!outstanding.count(id))
      raise(ErrorCode::ProviderProtocolViolation,
            "response id " + std::to_string(id) + " was never requested");
    if (resp.contains("error"))
      raise(ErrorCode::ProviderCrash,
            "provider reported an error for id " + std::to_string(id) + ": " +
                resp["error"].get<std::string>());
    if (!resp.contains("prediction"))
      raise(ErrorCode::ProviderProtocolViolation,
            "response " + std::to_string(id) + " lacks a prediction");
    responses[id] = resp["prediction"];
    outstanding.erase(id);
  }
  return responses;
}

void PredictionProvider::finish() {
  if (fn_ || !process_) return;
  try {
    process_->write_line(R"({"type":"shutdown"})");
  } catch (const Error&) {
    // provider may have exited already
  }
  process_->close_stdin();
  process_->wait();
}

// ---------------------------------------------------------------------------
// perf

PerfStats measure_perf(const std::vector<BatchTiming>& timings) {
  if (timings.empty()) raise(ErrorCode::EmptyInput, "no request timings");
  std::vector<double> latencies_ms;
  double total_s = 0.0;
  std::uint64_t n = 0;
  std::uint64_t max_batch = 0;
  for (const auto& t : timings) {
    if (t.batch_size == 0) raise(ErrorCode::EmptyInput, "zero-size batch timing");
    total_s += t.duration_s;
    n += t.batch_size;
    max_batch = std::max<std::uint64_t>(max_batch, t.batch_size);
    double per_example_ms = t.duration_s * 1000.0 / double(t.batch_size);
    for (std::size_t i = 0; i < t.batch_size; ++i)
      latencies_ms.push_back(per_example_ms);
  }
  std::sort(latencies_ms.begin(), latencies_ms.end());
  auto nearest_rank = [&](double p) {
    std::size_t rank = std::size_t(std::ceil(p / 100.0 * double(latencies_ms.size())));
    if (rank == 0) rank = 1;
    return latencies_ms[rank - 1];
  };

  PerfStats out;
  out.total_time_s = total_s;
  out.n_examples = n;
  out.batch_size = max_batch;
  out.throughput = total_s > 0.0 ? double(n) / total_s : 0.0;
  out.latency_mean_ms = total_s * 1000.0 / double(n);
  out.latency_p50_ms = nearest_rank(50.0);
  out.latency_p90_ms = nearest_rank(90.0);
  out.latency_p99_ms = nearest_rank(99.0);
  out.latency_max_ms = latencies_ms.back();
  return out;
}

json PerfStats::to_json() const {
  return json{{"total_time_s", total_time_s},
              {"throughput", throughput},
              {"latency_ms",
               {{"mean", latency_mean_ms},
                {"p50", latency_p50_ms},
                {"p90", latency_p90_ms},
                {"p99", latency_p99_ms},
                {"max", latency_max_ms}}},
              {"n_examples", n_examples},
              {"batch_size", batch_size}};
}

PerfStats PerfStats::from_json(const json& j) {
  PerfStats p;
  p.total_time_s = j.at("total_time_s").get<double>();
  p.throughput = j.at("throughput").get<double>();
  const json& lat = j.at("latency_ms");
  p.latency_mean_ms = lat.at("mean").get<double>();
  p.latency_p50_ms = lat.at("p50").get<double>();
  p.latency_p90_ms = lat.at("p90").get<double>();
  p.latency_p99_ms = lat.at("p99").get<double>();
  p.latency_max_ms = lat.at("max").get<double>();
  p.n_examples = j.at("n_examples").get<std::uint64_t>();
  p.batch_size = j.at("batch_size").get<std::uint64_t>();
  return p;
}

// ---------------------------------------------------------------------------
// report json

json EvaluationReport::to_json() const {
  json results = json::array();
  for (const auto& r : metric_results) results.push_back(r.to_json());
  json cis = json::object();
  for (const auto& [key, ci] : confidence_intervals) {
    cis[key] = json{{"point", ci.point}, {"low", ci.low},   {"high", ci.high},
                    {"level", ci.level}, {"B", ci.iterations}, {"seed", ci.seed}};
  }
  return json{{"task", task_id},
              {"dataset", {{"path", dataset_path}, {"sha256", dataset_hash}}},
              {"provider", provider},
              {"model", model_name},
              {"metrics", results},
              {"confidence_intervals", cis},
              {"perf", perf.to_json()},
              {"predictions_artifact", predictions_artifact},
              {"seed", seed},
              {"timestamp", timestamp}};
}

EvaluationReport EvaluationReport::from_json(const json& j) {
  EvaluationReport r;
  r.task_id = j.at("task").get<std::string>();
  r.dataset_path = j.at("dataset").at("path").get<std::string>();
  r.dataset_hash = j.at("dataset").at("sha256").get<std::string>();
  r.provider = j.at("provider").get<std::string>();
  r.model_name = j.at("model").get<std::string>();
  for (const auto& m : j.at("metrics"))
    r.metric_results.push_back(ModuleResult::from_json(m));
  for (const auto& [key, ci] : j.at("confidence_intervals").items()) {
    stats::ConfidenceInterval c;
    c.point = ci.at("point").get<double>();
    c.low = ci.at("low").get<double>();
    c.high = ci.at("high").get<double>();
    c.level = ci.at("level").get<double>();
    c.iterations = ci.at("B").get<std::uint64_t>();
    c.seed = ci.at("seed").get<std::uint64_t>();
    r.confidence_intervals[key] = c;
  }
  r.perf = PerfStats::from_json(j.at("perf"));
  r.predictions_artifact = j.at("predictions_artifact").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.timestamp = j.at("timestamp").get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// postprocessing

namespace {

std::int64_t parse_label(const json& prediction,
                         const std::map<std::string, std::int64_t>& label_map,
                         std::uint64_t id) {
  if (prediction.is_number_integer()) return prediction.get<std::int64_t>();
  if (prediction.is_string()) {
    const std::string& s = prediction.get_ref<const std::string&>();
    if (auto it = label_map.find(s); it != label_map.end()) return it->second;
    try {
      std::size_t used = 0;
      long long v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } catch (...) {
    }
  }
  raise(ErrorCode::ProviderProtocolViolation,
        "prediction for id " + std::to_string(id) +
            " is not an integer label (use --label-map for string labels)");
}

std::vector<std::string> parse_tag_sequence(const json& prediction,
                                            std::size_t expected_len,
                                            std::uint64_t id) {
  if (!prediction.is_array())
    raise(ErrorCode::ProviderProtocolViolation,
          "prediction for id " + std::to_string(id) + " must be an array of tags");
  std::vector<std::string> tags;
  for (const auto& t : prediction) {
    if (!t.is_string())
      raise(ErrorCode::ProviderProtocolViolation,
            "prediction for id " + std::to_string(id) + " holds a non-string tag");
    tags.push_back(t.get<std::string>());
  }
  if (tags.size() != expected_len)
    raise(ErrorCode::ProviderProtocolViolation,
          "prediction for id " + std::to_string(id) + " has " +
              std::to_string(tags.size()) + " tags, expected " +
              std::to_string(expected_len));
  return tags;
}

// Raw provider prediction -> the task's canonical per-example form
// (integer label, tag array, or text span). The canonical form is what
// the predictions artifact persists, so offline recomputes need no
// label map or provider context.
json canonical_prediction(const TaskSpec& task, const json& raw,
                          const json& reference,
                          const std::map<std::string, std::int64_t>& label_map,
                          std::uint64_t id) {
  if (task.id == "text-classification")
    return parse_label(raw, label_map, id);
  if (task.id == "token-classification")
    return parse_tag_sequence(raw, reference.get<std::vector<std::string>>().size(),
                              id);
  if (task.id == "question-answering-extractive") {
    if (!raw.is_string())
      raise(ErrorCode::ProviderProtocolViolation,
            "prediction for id " + std::to_string(id) + " must be a text span");
    return raw;
  }
  raise(ErrorCode::InvalidSpec, "unknown task '" + task.id + "'");
}

// canonical per-example predictions/references -> rows for the metric
// modules (token tags are flattened here)
Batch metric_rows(const TaskSpec& task, const std::vector<json>& predictions,
                  const std::vector<json>& references) {
  if (task.id == "text-classification") {
    IntColumn preds, refs;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      preds.push_back(predictions[i].get<std::int64_t>());
      refs.push_back(references[i].get<std::int64_t>());
    }
    return Batch().set("predictions", preds).set("references", refs);
  }
  if (task.id == "token-classification") {
    StringColumn preds, refs;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      auto ref_tags = references[i].get<std::vector<std::string>>();
      auto pred_tags = predictions[i].get<std::vector<std::string>>();
      if (pred_tags.size() != ref_tags.size())
        raise(ErrorCode::ProviderProtocolViolation,
              "prediction for id " + std::to_string(i) + " has " +
                  std::to_string(pred_tags.size()) + " tags, expected " +
                  std::to_string(ref_tags.size()));
      for (std::size_t t = 0; t < ref_tags.size(); ++t) {
        preds.push_back(pred_tags[t]);
        refs.push_back(ref_tags[t]);
      }
    }
    return Batch().set("predictions", preds).set("references", refs);
  }
  if (task.id == "question-answering-extractive") {
    StringColumn preds, refs;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      preds.push_back(predictions[i].get<std::string>());
      refs.push_back(references[i].get<std::string>());
    }
    return Batch().set("predictions", preds).set("references", refs);
  }
  raise(ErrorCode::InvalidSpec, "unknown task '" + task.id + "'");
}

json override_params(const TaskSpec& task, const std::string& metric_id) {
  auto it = task.metric_params.find(metric_id);
  return it == task.metric_params.end() ? json::object() : it->second;
}

}  // namespace

EvaluationReport evaluate_task(const TaskSpec& task,
                               const std::filesystem::path& dataset_path,
                               PredictionProvider& provider,
                               const std::vector<std::string>& metric_ids,
                               const Registry& registry,
                               const EvaluateOptions& options) {
  if (options.batch_size == 0)
    raise(ErrorCode::InvalidSpec, "batch_size must be >= 1");

  std::vector<json> raw_rows = read_jsonl(dataset_path);
  if (raw_rows.empty())
    raise(ErrorCode::DatasetParseError, "dataset is empty: " + dataset_path.string());
  Table dataset = table_from_json_rows(task.dataset_schema, raw_rows);
  const std::size_t n = dataset.row_count();

  std::vector<std::string> ids =
      metric_ids.empty() ? task.default_metrics : metric_ids;
  std::vector<std::unique_ptr<EvaluationModule>> modules;
  for (const auto& id : ids) {
    auto module = registry.load(id);
    if (module->kind() != ModuleKind::Metric)
      raise(ErrorCode::MetricSchemaMismatch,
            "module '" + id + "' is a " + module_kind_name(module->kind()) +
                ", not a metric");
    if (!(module->features() == task.metric_row_schema))
      raise(ErrorCode::MetricSchemaMismatch,
            "module '" + id + "' expects columns [" +
                module->features().to_string() + "], task '" + task.id +
                "' provides [" + task.metric_row_schema.to_string() + "]");
    modules.push_back(std::move(module));
  }

  // inference
  provider.start(task.id, options.batch_size);
  std::vector<json> predictions(n);
  std::vector<json> references;
  references.reserve(n);
  const Column& ref_col = dataset.column(task.reference_column);
  for (std::size_t i = 0; i < n; ++i)
    references.push_back(column_value_to_json(ref_col, i));

  std::vector<BatchTiming> timings;
  for (std::size_t begin = 0; begin < n; begin += options.batch_size) {
    std::size_t end = std::min(n, begin + options.batch_size);
    std::vector<std::pair<std::uint64_t, json>> requests;
    for (std::size_t i = begin; i < end; ++i) {
      json inputs = json::object();
      for (const auto& col : task.input_columns)
        inputs[col] = column_value_to_json(dataset.column(col), i);
      requests.emplace_back(i, std::move(inputs));
    }
    auto t0 = std::chrono::steady_clock::now();
    auto responses = provider.predict_batch(requests);
    auto t1 = std::chrono::steady_clock::now();
    timings.push_back(
        {end - begin, std::chrono::duration<double>(t1 - t0).count()});
    for (auto& [id, prediction] : responses)
      predictions[id] = canonical_prediction(task, prediction, references[id],
                                             options.label_map, id);
  }
  provider.finish();

  // predictions artifact: one row per example, metric-ready values
  std::filesystem::path artifact_dir = options.artifact_dir;
  if (artifact_dir.empty()) {
    artifact_dir = std::filesystem::temp_directory_path() /
                   ("evalkit-artifacts-" + std::to_string(::getpid()));
  }
  std::filesystem::create_directories(artifact_dir);
  static std::atomic<std::uint64_t> artifact_counter{0};
  std::string stamp = std::to_string(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  auto artifact_path =
      artifact_dir / ("predictions-" + stamp + "-" +
                      std::to_string(artifact_counter.fetch_add(1)) + ".jsonl");
  {
    std::vector<json> artifact_rows;
    artifact_rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      json inputs = json::object();
      for (const auto& col : task.input_columns)
        inputs[col] = column_value_to_json(dataset.column(col), i);
      artifact_rows.push_back(json{{"id", i},
                                   {"input_hash", Sha256::of_string(inputs.dump())},
                                   {"prediction", predictions[i]},
                                   {"reference", references[i]}});
    }
    write_jsonl(artifact_path, artifact_rows);
  }

  Batch rows = metric_rows(task, predictions, references);
  Table metric_table = batch_to_table(task.metric_row_schema, rows);

  EvaluationReport report;
  report.task_id = task.id;
  report.dataset_path = dataset_path.string();
  report.dataset_hash = Sha256::of_file(dataset_path.string());
  report.provider = provider.describe();
  report.model_name = provider.model_name();
  report.predictions_artifact = artifact_path.string();
  report.seed = options.seed;
  report.timestamp = iso_timestamp_utc();

  for (std::size_t m = 0; m < modules.size(); ++m) {
    json params = override_params(task, ids[m]);
    report.metric_results.push_back(
        modules[m]->compute_rows(metric_table, params));
  }

  if (options.ci) {
    for (std::size_t m = 0; m < modules.size(); ++m) {
      auto* module = modules[m].get();
      json params = override_params(task, ids[m]);
      for (const auto& field : module->output_schema()) {
        if (field.kind != OutputKind::Number) continue;
        auto statistic = [&](const std::vector<std::size_t>& indices) {
          Table subset = metric_table.select(indices);
          return module->compute_rows(subset, params).number(field.name);
        };
        report.confidence_intervals[ids[m] + "/" + field.name] =
            stats::bootstrap_ci(statistic, metric_table.row_count(),
                                options.ci_level, options.ci_iterations,
                                options.seed);
      }
    }
  }

  report.perf = measure_perf(timings);
  return report;
}

std::vector<ModuleResult> recompute_from_artifact(
    const std::filesystem::path& artifact_path, const TaskSpec& task,
    const std::vector<std::string>& metric_ids, const Registry& registry) {
  std::vector<json> rows = read_jsonl(artifact_path);
  if (rows.empty())
    raise(ErrorCode::DatasetParseError, "empty artifact: " + artifact_path.string());
  std::vector<json> predictions, references;
  for (const auto& row : rows) {
    predictions.push_back(row.at("prediction"));
    references.push_back(row.at("reference"));
  }
  Batch batch = metric_rows(task, predictions, references);
  Table table = batch_to_table(task.metric_row_schema, batch);

  std::vector<ModuleResult> results;
  for (const auto& id : metric_ids) {
    auto module = registry.load(id);
    results.push_back(module->compute_rows(table, override_params(task, id)));
  }
  return results;
}

}  // namespace evalkit
