#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "evalkit/columnar.hpp"
#include "evalkit/schema.hpp"

namespace evalkit {

using json = nlohmann::json;

enum class ModuleKind { Metric, Comparison, Measurement };

const char* module_kind_name(ModuleKind k);
ModuleKind module_kind_from_name(const std::string& name);

// Column set each kind must declare in its feature schema.
void check_kind_features(ModuleKind kind, const FeatureSchema& features);

enum class OutputKind { Number, Array, Mapping };

struct OutputField {
  std::string name;
  OutputKind kind = OutputKind::Number;
  // set only for rankable scalar scores; leaderboards refuse to rank
  // a key without it
  std::optional<bool> higher_is_better;
};

using ScoreValue =
    std::variant<double, std::vector<double>, std::map<std::string, double>>;
using ScoreMap = std::map<std::string, ScoreValue>;

json score_value_to_json(const ScoreValue& v);
ScoreValue score_value_from_json(const json& j);

struct ModuleResult {
  ScoreMap values;
  std::string module_id;
  std::string module_version;
  std::optional<std::uint64_t> seed;
  json parameters_used = json::object();
  // provenance: where the module came from and at which revision
  std::string source;
  std::string revision;

  double number(const std::string& key) const;  // throws if absent/non-scalar
  json to_json() const;
  static ModuleResult from_json(const json& j);
};

// Scoring function over fully materialized rows. Must return exactly the
// keys of the module's output schema, all values finite.
using ScoreFn = std::function<ScoreMap(const Table& rows, const json& params)>;

struct ModuleSpec {
  std::string id;
  std::string version = "1.0.0";
  ModuleKind kind = ModuleKind::Metric;
  FeatureSchema features;
  std::vector<OutputField> output_schema;
  json default_params = json::object();
  // headline score key, e.g. "f1" for the f1 module; used by the paired
  // bootstrap comparison and as the default leaderboard key
  std::string primary_key;
  ScoreFn score;
};

// Uniform add/add_batch/compute surface shared by single and combined
// modules.
class Module {
 public:
  virtual ~Module() = default;

  virtual const std::string& id() const = 0;
  virtual const std::string& version() const = 0;
  virtual ModuleKind kind() const = 0;
  virtual const FeatureSchema& features() const = 0;
  virtual std::uint64_t buffered_rows() const = 0;

  virtual void add_batch(const Batch& batch) = 0;

  // Appends the inline batch (if any), scores all accumulated rows, then
  // resets the buffer unless the reserved `snapshot` parameter is true.
  virtual ModuleResult compute(const Batch* inline_batch,
                               const json& overrides) = 0;

  // Scores the given rows directly, leaving the accumulation buffer alone.
  virtual ModuleResult compute_rows(const Table& rows,
                                    const json& overrides) = 0;

  ModuleResult compute() { return compute(nullptr, json::object()); }
  ModuleResult compute(const Batch& batch) { return compute(&batch, json::object()); }
  ModuleResult compute(const Batch& batch, const json& overrides) {
    return compute(&batch, overrides);
  }
};

class EvaluationModule final : public Module {
 public:
  EvaluationModule(ModuleSpec spec, BufferOptions buffer_options = {});

  const std::string& id() const override { return spec_.id; }
  const std::string& version() const override { return spec_.version; }
  ModuleKind kind() const override { return spec_.kind; }
  const FeatureSchema& features() const override { return spec_.features; }
  const std::vector<OutputField>& output_schema() const {
    return spec_.output_schema;
  }
  const json& default_params() const { return spec_.default_params; }
  const std::string& primary_key() const { return spec_.primary_key; }
  std::uint64_t buffered_rows() const override { return buffer_.row_count(); }

  void set_provenance(std::string source, std::string revision) {
    source_ = std::move(source);
    revision_ = std::move(revision);
  }
  const std::string& source() const { return source_; }
  const std::string& revision() const { return revision_; }

  void add_batch(const Batch& batch) override;
  ModuleResult compute(const Batch* inline_batch, const json& overrides) override;
  ModuleResult compute_rows(const Table& rows, const json& overrides) override;
  using Module::compute;

 private:
  json resolve_params(const json& overrides, bool* snapshot) const;

  ModuleSpec spec_;
  ColumnarBuffer buffer_;
  std::string source_ = "adhoc";
  std::string revision_;
};

// Several modules bundled behind the single-module surface. Members must
// share an identical feature schema. Result keys are the union of member
// keys; colliding keys are prefixed with "<module_id>_".
class CombinedModule final : public Module {
 public:
  explicit CombinedModule(std::vector<std::unique_ptr<EvaluationModule>> members,
                          BufferOptions buffer_options = {});

  const std::string& id() const override { return id_; }
  const std::string& version() const override { return version_; }
  ModuleKind kind() const override { return members_.front()->kind(); }
  const FeatureSchema& features() const override {
    return members_.front()->features();
  }
  std::uint64_t buffered_rows() const override { return buffer_.row_count(); }
  const std::vector<std::unique_ptr<EvaluationModule>>& members() const {
    return members_;
  }

  void add_batch(const Batch& batch) override;
  ModuleResult compute(const Batch* inline_batch, const json& overrides) override;
  ModuleResult compute_rows(const Table& rows, const json& overrides) override;
  using Module::compute;

 private:
  std::vector<std::unique_ptr<EvaluationModule>> members_;
  std::string id_;
  std::string version_ = "1.0.0";
  ColumnarBuffer buffer_;
};

}  // namespace evalkit
