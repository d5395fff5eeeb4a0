#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "evalkit/module.hpp"

namespace evalkit {

inline constexpr const char* kEvalkitVersion = "1.0.0";

struct ModuleManifest {
  std::string id;
  std::string version = "0.1.0";
  ModuleKind kind = ModuleKind::Metric;
  FeatureSchema features;
  std::vector<OutputField> output_schema;
  json default_params = json::object();
  std::string primary_key;
  std::string card_path = "card.md";
  // {"type":"builtin","symbol":..} | {"type":"constant","values":{..}} |
  // {"type":"command","argv":[..]} | {"descriptor":"file.json"}
  json implementation = json::object();
  json examples = json::array();

  static ModuleManifest from_json(const json& j);  // throws InvalidManifest
  json to_json() const;
};

bool valid_module_name(const std::string& name);   // [a-z0-9_-]+ (ns/name ok)
bool valid_semver(const std::string& version);

struct Violation {
  enum class Severity { Warning, Error };
  Severity severity = Severity::Error;
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  std::string subject;

  bool ok() const {
    for (const auto& v : violations)
      if (v.severity == Violation::Severity::Error) return false;
    return true;
  }
  std::size_t error_count() const {
    std::size_t n = 0;
    for (const auto& v : violations)
      if (v.severity == Violation::Severity::Error) ++n;
    return n;
  }
  json to_json() const;
};

// Card text must contain all six required section headings, each with
// non-empty prose; every output key should appear in the Output Range
// section (warning otherwise).
void check_card_text(const std::string& card_text,
                     const std::vector<OutputField>& outputs,
                     ValidationReport& report);

ValidationReport validate_module_dir(const std::filesystem::path& dir);
ValidationReport validate_builtin(const std::string& id);

struct GitSource {
  std::string url;
  std::string revision;  // empty: default branch head
};

struct RegistryOptions {
  bool include_builtins = true;
  std::vector<std::filesystem::path> local_roots;
  std::vector<GitSource> git_sources;
  std::filesystem::path cache_dir;  // default: EVALKIT_CACHE_DIR or temp
  BufferOptions buffer_options;
};

// Resolves module names against an ordered list of roots: built-ins
// first, then local directories, then git sources. Earlier roots shadow
// later ones. Names beginning with "./", "../" or "/" load directly from
// that path.
class Registry {
 public:
  explicit Registry(RegistryOptions options = {});

  // Roots from EVALKIT_REGISTRY_PATH (colon separated directories) after
  // the built-ins.
  static Registry with_env_roots();

  std::unique_ptr<EvaluationModule> load(const std::string& name,
                                         const std::string& version = "") const;
  std::unique_ptr<CombinedModule> combine(
      const std::vector<std::string>& names) const;

  bool resolves(const std::string& name) const;

  // Ranking direction for a scalar score key, scanning built-ins and
  // local manifests. nullopt when no module declares the key or the key
  // has no direction.
  std::optional<bool> higher_is_better(const std::string& metric_key) const;
  bool known_metric_key(const std::string& metric_key) const;

  const RegistryOptions& options() const { return options_; }

 private:
  std::unique_ptr<EvaluationModule> load_from_dir(
      const std::filesystem::path& dir, const std::string& source,
      const std::string& revision, const std::string& version) const;
  std::filesystem::path fetch_git(const GitSource& source,
                                  const std::string& revision_override,
                                  std::string* resolved_revision) const;

  RegistryOptions options_;
};

struct ScaffoldReport {
  std::filesystem::path directory;
  std::vector<std::string> files;
  bool git_initialized = false;
};

// Writes manifest, card, implementation descriptor and smoke-test stub,
// then initializes a git repository with an initial commit. The result
// passes validate_module_dir with zero violations.
ScaffoldReport create_scaffold(const std::string& name, ModuleKind kind,
                               const std::filesystem::path& target_dir);

}  // namespace evalkit
