#include "evalkit/module.hpp"

#include <cmath>
#include <set>

namespace evalkit {

const char* module_kind_name(ModuleKind k) {
  switch (k) {
    case ModuleKind::Metric: return "metric";
    case ModuleKind::Comparison: return "comparison";
    case ModuleKind::Measurement: return "measurement";
  }
  return "?";
}

ModuleKind module_kind_from_name(const std::string& name) {
  if (name == "metric") return ModuleKind::Metric;
  if (name == "comparison") return ModuleKind::Comparison;
  if (name == "measurement") return ModuleKind::Measurement;
  raise(ErrorCode::InvalidManifest, "unknown module kind: " + name);
}

void check_kind_features(ModuleKind kind, const FeatureSchema& features) {
  auto require = [&](const char* col) {
    if (features.index_of(col) < 0)
      raise(ErrorCode::InvalidManifest,
            std::string(module_kind_name(kind)) +
                " modules require a '" + col + "' column");
  };
  switch (kind) {
    case ModuleKind::Metric:
      require("predictions");
      require("references");
      break;
    case ModuleKind::Comparison:
      require("predictions_a");
      require("predictions_b");
      require("references");
      break;
    case ModuleKind::Measurement:
      require("data");
      break;
  }
}

json score_value_to_json(const ScoreValue& v) {
  struct ToJson {
    json operator()(double d) const { return d; }
    json operator()(const std::vector<double>& a) const { return a; }
    json operator()(const std::map<std::string, double>& m) const { return m; }
  };
  return std::visit(ToJson{}, v);
}

ScoreValue score_value_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array()) return j.get<std::vector<double>>();
  if (j.is_object()) return j.get<std::map<std::string, double>>();
  raise(ErrorCode::InvalidValue, "score value must be number, array, or object");
}

double ModuleResult::number(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end())
    raise(ErrorCode::UnknownMetric, "no score named '" + key + "'");
  const double* d = std::get_if<double>(&it->second);
  if (!d) raise(ErrorCode::InvalidValue, "score '" + key + "' is not a scalar");
  return *d;
}

json ModuleResult::to_json() const {
  json v = json::object();
  for (const auto& [k, val] : values) v[k] = score_value_to_json(val);
  json j{{"values", v},
         {"module_id", module_id},
         {"module_version", module_version},
         {"parameters_used", parameters_used},
         {"source", source},
         {"revision", revision}};
  if (seed) j["seed"] = *seed;
  return j;
}

ModuleResult ModuleResult::from_json(const json& j) {
  ModuleResult r;
  for (const auto& [k, v] : j.at("values").items())
    r.values[k] = score_value_from_json(v);
  r.module_id = j.at("module_id").get<std::string>();
  r.module_version = j.at("module_version").get<std::string>();
  r.parameters_used = j.value("parameters_used", json::object());
  r.source = j.value("source", "");
  r.revision = j.value("revision", "");
  if (j.contains("seed")) r.seed = j["seed"].get<std::uint64_t>();
  return r;
}

namespace {

bool value_finite(const ScoreValue& v) {
  struct Check {
    bool operator()(double d) const { return std::isfinite(d); }
    bool operator()(const std::vector<double>& a) const {
      for (double d : a)
        if (!std::isfinite(d)) return false;
      return true;
    }
    bool operator()(const std::map<std::string, double>& m) const {
      for (const auto& [k, d] : m) {
        (void)k;
        if (!std::isfinite(d)) return false;
      }
      return true;
    }
  };
  return std::visit(Check{}, v);
}

void check_result_shape(const ModuleSpec& spec, const ScoreMap& values) {
  if (values.size() != spec.output_schema.size())
    raise(ErrorCode::Internal,
          "module '" + spec.id + "' returned " +
              std::to_string(values.size()) + " keys, declared " +
              std::to_string(spec.output_schema.size()));
  for (const auto& field : spec.output_schema) {
    auto it = values.find(field.name);
    if (it == values.end())
      raise(ErrorCode::Internal,
            "module '" + spec.id + "' missing declared key '" + field.name + "'");
    if (!value_finite(it->second))
      raise(ErrorCode::Internal,
            "module '" + spec.id + "' produced a non-finite '" + field.name + "'");
  }
}

bool json_types_compatible(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace

EvaluationModule::EvaluationModule(ModuleSpec spec, BufferOptions buffer_options)
    : spec_(std::move(spec)), buffer_(spec_.features, buffer_options) {
  check_kind_features(spec_.kind, spec_.features);
  if (!spec_.score) raise(ErrorCode::Internal, "module '" + spec_.id + "' has no score fn");
  if (spec_.primary_key.empty() && !spec_.output_schema.empty())
    spec_.primary_key = spec_.output_schema.front().name;
}

void EvaluationModule::add_batch(const Batch& batch) { buffer_.append(batch); }

json EvaluationModule::resolve_params(const json& overrides, bool* snapshot) const {
  json resolved = spec_.default_params;
  *snapshot = false;
  if (!overrides.is_object())
    raise(ErrorCode::InvalidValue, "parameter overrides must be an object");
  for (const auto& [key, value] : overrides.items()) {
    if (key == "snapshot") {
      if (!value.is_boolean())
        raise(ErrorCode::InvalidValue, "snapshot must be a boolean");
      *snapshot = value.get<bool>();
      continue;
    }
    if (!resolved.contains(key))
      raise(ErrorCode::UnknownParameter,
            "module '" + spec_.id + "' has no parameter '" + key + "'");
    if (!json_types_compatible(resolved[key], value))
      raise(ErrorCode::InvalidValue,
            "parameter '" + key + "' has wrong type for module '" + spec_.id + "'");
    resolved[key] = value;
  }
  return resolved;
}

ModuleResult EvaluationModule::compute_rows(const Table& rows,
                                            const json& overrides) {
  bool snapshot = false;
  json params = resolve_params(overrides, &snapshot);

  ScoreMap values = spec_.score(rows, params);
  check_result_shape(spec_, values);

  ModuleResult result;
  result.values = std::move(values);
  result.module_id = spec_.id;
  result.module_version = spec_.version;
  result.parameters_used = params;
  result.source = source_;
  result.revision = revision_;
  if (params.contains("seed") && params["seed"].is_number())
    result.seed = params["seed"].get<std::uint64_t>();
  return result;
}

ModuleResult EvaluationModule::compute(const Batch* inline_batch,
                                       const json& overrides) {
  if (inline_batch) buffer_.append(*inline_batch);
  if (buffer_.row_count() == 0)
    raise(ErrorCode::EmptyInput,
          "module '" + spec_.id + "': nothing accumulated and no inline batch");

  bool snapshot = false;
  (void)resolve_params(overrides, &snapshot);  // validate before materializing

  Table rows = buffer_.materialize();
  ModuleResult result = compute_rows(rows, overrides);
  if (!snapshot) buffer_.reset();
  return result;
}

CombinedModule::CombinedModule(
    std::vector<std::unique_ptr<EvaluationModule>> members,
    BufferOptions buffer_options)
    : members_(std::move(members)),
      buffer_(members_.empty() ? FeatureSchema{} : members_.front()->features(),
              buffer_options) {
  if (members_.empty())
    raise(ErrorCode::EmptyInput, "combine needs at least one module");
  const FeatureSchema& schema = members_.front()->features();
  for (const auto& m : members_) {
    if (!(m->features() == schema))
      raise(ErrorCode::IncompatibleSchemas,
            "module '" + m->id() + "' does not share the combined schema");
  }
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (i) id_ += "+";
    id_ += members_[i]->id();
  }
}

void CombinedModule::add_batch(const Batch& batch) { buffer_.append(batch); }

ModuleResult CombinedModule::compute_rows(const Table& rows,
                                          const json& overrides) {
  // overrides are forwarded per member, filtered to the keys it declares
  std::vector<ModuleResult> partials;
  partials.reserve(members_.size());
  for (auto& m : members_) {
    json member_overrides = json::object();
    for (const auto& [key, value] : overrides.items())
      if (key == "snapshot" || m->default_params().contains(key))
        member_overrides[key] = value;
    member_overrides.erase("snapshot");
    partials.push_back(m->compute_rows(rows, member_overrides));
  }

  std::map<std::string, int> key_count;
  for (const auto& p : partials)
    for (const auto& [k, v] : p.values) key_count[k]++;

  ModuleResult result;
  result.module_id = id_;
  result.module_version = version_;
  result.source = "combined";
  json params = json::object();
  for (std::size_t i = 0; i < partials.size(); ++i) {
    const auto& p = partials[i];
    params[members_[i]->id()] = p.parameters_used;
    for (const auto& [k, v] : p.values) {
      std::string key = key_count[k] > 1 ? p.module_id + "_" + k : k;
      result.values[key] = v;
    }
  }
  result.parameters_used = params;
  return result;
}

ModuleResult CombinedModule::compute(const Batch* inline_batch,
                                     const json& overrides) {
  if (inline_batch) buffer_.append(*inline_batch);
  if (buffer_.row_count() == 0)
    raise(ErrorCode::EmptyInput,
          "combined module: nothing accumulated and no inline batch");

  bool snapshot =
      overrides.is_object() && overrides.value("snapshot", false);

  Table rows = buffer_.materialize();
  ModuleResult result = compute_rows(rows, overrides);
  if (!snapshot) buffer_.reset();
  return result;
}

}  // namespace evalkit
