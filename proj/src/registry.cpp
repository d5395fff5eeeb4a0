#include "evalkit/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "evalkit/cards.hpp"
#include "evalkit/hash.hpp"
#include "evalkit/jsonl.hpp"
#include "evalkit/metrics.hpp"
#include "evalkit/subprocess.hpp"

namespace evalkit {

namespace {

constexpr int kExternalModuleTimeoutMs = 60 * 1000;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IOFailure, "cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IOFailure, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) raise(ErrorCode::IOFailure, "write failed: " + path.string());
}

bool name_segment_valid(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

const char* output_kind_name(OutputKind k) {
  switch (k) {
    case OutputKind::Number: return "number";
    case OutputKind::Array: return "array";
    case OutputKind::Mapping: return "mapping";
  }
  return "?";
}

OutputKind output_kind_from_name(const std::string& s) {
  if (s == "number") return OutputKind::Number;
  if (s == "array") return OutputKind::Array;
  if (s == "mapping") return OutputKind::Mapping;
  raise(ErrorCode::InvalidManifest, "unknown output kind: " + s);
}

json features_json(const FeatureSchema& schema) {
  json out = json::array();
  for (const auto& c : schema.columns)
    out.push_back({{"name", c.name}, {"type", column_type_name(c.type)}});
  return out;
}

json outputs_json(const std::vector<OutputField>& fields) {
  json out = json::array();
  for (const auto& f : fields) {
    json e{{"name", f.name}, {"kind", output_kind_name(f.kind)}};
    if (f.higher_is_better) e["higher_is_better"] = *f.higher_is_better;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

bool valid_module_name(const std::string& name) {
  auto slash = name.find('/');
  if (slash == std::string::npos) return name_segment_valid(name);
  if (name.find('/', slash + 1) != std::string::npos) return false;
  return name_segment_valid(name.substr(0, slash)) &&
         name_segment_valid(name.substr(slash + 1));
}

bool valid_semver(const std::string& version) {
  int part = 0;
  std::size_t i = 0;
  while (part < 3) {
    std::size_t start = i;
    while (i < version.size() && version[i] >= '0' && version[i] <= '9') ++i;
    if (i == start) return false;
    ++part;
    if (part < 3) {
      if (i >= version.size() || version[i] != '.') return false;
      ++i;
    }
  }
  return i == version.size() || version[i] == '-' || version[i] == '+';
}

ModuleManifest ModuleManifest::from_json(const json& j) {
  if (!j.is_object()) raise(ErrorCode::InvalidManifest, "manifest must be an object");
  ModuleManifest m;
  try {
    m.id = j.at("id").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.kind = module_kind_from_name(j.at("kind").get<std::string>());
    for (const auto& col : j.at("features")) {
      m.features.columns.push_back(
          {col.at("name").get<std::string>(),
           column_type_from_name(col.at("type").get<std::string>())});
    }
    for (const auto& field : j.at("output_schema")) {
      OutputField f;
      f.name = field.at("name").get<std::string>();
      f.kind = output_kind_from_name(field.value("kind", "number"));
      if (field.contains("higher_is_better"))
        f.higher_is_better = field["higher_is_better"].get<bool>();
      m.output_schema.push_back(std::move(f));
    }
    m.default_params = j.value("parameters", json::object());
    m.primary_key = j.value("primary_key", "");
    m.card_path = j.value("card", "card.md");
    m.implementation = j.value("implementation", json::object());
    m.examples = j.value("examples", json::array());
  } catch (const json::exception& e) {
    raise(ErrorCode::InvalidManifest, std::string("manifest: ") + e.what());
  }
  if (m.primary_key.empty() && !m.output_schema.empty())
    m.primary_key = m.output_schema.front().name;
  return m;
}

json ModuleManifest::to_json() const {
  return json{{"id", id},
              {"version", version},
              {"kind", module_kind_name(kind)},
              {"features", features_json(features)},
              {"output_schema", outputs_json(output_schema)},
              {"parameters", default_params},
              {"primary_key", primary_key},
              {"card", card_path},
              {"implementation", implementation},
              {"examples", examples}};
}

json ValidationReport::to_json() const {
  json items = json::array();
  for (const auto& v : violations) {
    items.push_back(
        {{"severity", v.severity == Violation::Severity::Error ? "error" : "warning"},
         {"code", v.code},
         {"message", v.message}});
  }
  return json{{"subject", subject}, {"ok", ok()}, {"violations", items}};
}

// ---------------------------------------------------------------------------
// card checking

namespace {

// returns section body text for "## <heading>" (case-insensitive heading
// match), or nullopt
std::optional<std::string> card_section(const std::string& card,
                                        const std::string& heading) {
  auto lower = [](std::string s) {
    for (char& c : s)
      if (c >= 'A' && c <= 'Z') c = char(c - 'A' + 'a');
    return s;
  };
  std::istringstream in(card);
  std::string line;
  std::string want = lower(heading);
  bool collecting = false;
  std::string body;
  while (std::getline(in, line)) {
    if (line.rfind("## ", 0) == 0) {
      if (collecting) break;
      std::string h = line.substr(3);
      while (!h.empty() && (h.back() == ' ' || h.back() == '\r')) h.pop_back();
      if (lower(h) == want) collecting = true;
      continue;
    }
    if (collecting) body += line + "\n";
  }
  if (!collecting) return std::nullopt;
  return body;
}

bool blank(const std::string& s) {
  for (char c : s)
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
  return true;
}

}  // namespace

void check_card_text(const std::string& card_text,
                     const std::vector<OutputField>& outputs,
                     ValidationReport& report) {
  for (const char* heading : kCardSections) {
    auto body = card_section(card_text, heading);
    if (!body) {
      report.violations.push_back({Violation::Severity::Error, "card_section_missing",
                                   std::string("card lacks section '") + heading + "'"});
    } else if (blank(*body)) {
      report.violations.push_back({Violation::Severity::Error, "card_section_empty",
                                   std::string("card section '") + heading + "' is empty"});
    }
  }
  if (auto range = card_section(card_text, "Output Range")) {
    for (const auto& field : outputs) {
      if (range->find(field.name) == std::string::npos)
        report.violations.push_back(
            {Violation::Severity::Warning, "card_range_key_missing",
             "output key '" + field.name + "' not mentioned in the Output Range section"});
    }
  }
}

// ---------------------------------------------------------------------------
// validation

namespace {

void check_manifest_semantics(const ModuleManifest& m, ValidationReport& report) {
  auto err = [&](const std::string& code, const std::string& msg) {
    report.violations.push_back({Violation::Severity::Error, code, msg});
  };
  if (!valid_module_name(m.id))
    err("bad_id", "id '" + m.id + "' must match [a-z0-9_-]+ (optionally ns/name)");
  if (!valid_semver(m.version))
    err("bad_version", "version '" + m.version + "' is not a semantic version");
  if (m.features.columns.empty()) err("no_features", "feature schema is empty");
  {
    std::set<std::string> seen;
    for (const auto& c : m.features.columns)
      if (!seen.insert(c.name).second)
        err("duplicate_feature", "duplicate feature column '" + c.name + "'");
  }
  try {
    check_kind_features(m.kind, m.features);
  } catch (const Error& e) {
    err("kind_features", e.message());
  }
  if (m.output_schema.empty()) err("no_outputs", "output schema is empty");
  {
    std::set<std::string> seen;
    for (const auto& f : m.output_schema)
      if (!seen.insert(f.name).second)
        err("duplicate_output", "duplicate output key '" + f.name + "'");
  }
  if (!m.default_params.is_object())
    err("bad_parameters", "parameters must be an object");
  if (!m.primary_key.empty()) {
    bool found = false;
    for (const auto& f : m.output_schema) found = found || f.name == m.primary_key;
    if (!found) err("bad_primary_key", "primary_key '" + m.primary_key +
                                           "' is not an output key");
  }

  // declared examples must satisfy the feature schema
  if (!m.examples.is_array()) {
    err("bad_examples", "examples must be an array");
  } else {
    for (std::size_t i = 0; i < m.examples.size(); ++i) {
      const json& ex = m.examples[i];
      if (!ex.is_object() || !ex.contains("batch")) {
        err("bad_example", "example " + std::to_string(i) + " lacks a 'batch' object");
        continue;
      }
      try {
        Batch b = batch_from_json(m.features, ex["batch"]);
        (void)batch_to_table(m.features, b);
      } catch (const Error& e) {
        err("example_schema", "example " + std::to_string(i) + ": " + e.message());
      }
    }
  }
}

}  // namespace

ValidationReport validate_module_dir(const std::filesystem::path& dir) {
  ValidationReport report;
  report.subject = dir.string();
  auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    raise(ErrorCode::IOFailure, "no manifest.json in " + dir.string());

  json parsed = json::parse(read_file(manifest_path), nullptr, false);
  if (parsed.is_discarded()) {
    report.violations.push_back({Violation::Severity::Error, "manifest_parse",
                                 "manifest.json is not valid JSON"});
    return report;
  }
  ModuleManifest manifest;
  try {
    manifest = ModuleManifest::from_json(parsed);
  } catch (const Error& e) {
    report.violations.push_back(
        {Violation::Severity::Error, "manifest_shape", e.message()});
    return report;
  }
  check_manifest_semantics(manifest, report);

  auto card_path = dir / manifest.card_path;
  if (!std::filesystem::exists(card_path)) {
    report.violations.push_back({Violation::Severity::Error, "card_missing",
                                 "card file not found: " + card_path.string()});
  } else {
    check_card_text(read_file(card_path), manifest.output_schema, report);
  }

  if (manifest.implementation.contains("descriptor")) {
    auto desc = dir / manifest.implementation["descriptor"].get<std::string>();
    if (!std::filesystem::exists(desc))
      report.violations.push_back({Violation::Severity::Error, "descriptor_missing",
                                   "implementation descriptor not found: " + desc.string()});
  } else if (!manifest.implementation.contains("type")) {
    report.violations.push_back({Violation::Severity::Error, "implementation_missing",
                                 "manifest lacks an implementation binding"});
  }
  return report;
}

ValidationReport validate_builtin(const std::string& id) {
  ValidationReport report;
  report.subject = "builtin:" + id;
  ModuleSpec spec = canonical_module_spec(id);
  ModuleManifest m;
  m.id = spec.id;
  m.version = spec.version;
  m.kind = spec.kind;
  m.features = spec.features;
  m.output_schema = spec.output_schema;
  m.default_params = spec.default_params;
  m.primary_key = spec.primary_key;
  m.implementation = json{{"type", "builtin"}, {"symbol", spec.id}};
  check_manifest_semantics(m, report);

  const char* card = canonical_card_text(id);
  if (!card) {
    report.violations.push_back(
        {Violation::Severity::Error, "card_missing", "built-in module has no card"});
  } else {
    check_card_text(card, spec.output_schema, report);
  }
  return report;
}

// ---------------------------------------------------------------------------
// implementation bindings

namespace {

ScoreFn constant_score_fn(const std::string& id, const json& values) {
  if (!values.is_object())
    raise(ErrorCode::InvalidManifest,
          "constant implementation of '" + id + "' needs a values object");
  ScoreMap fixed;
  for (const auto& [k, v] : values.items()) fixed[k] = score_value_from_json(v);
  return [fixed](const Table&, const json&) { return fixed; };
}

// One scoring call = one child process run:
//   -> {"type":"hello","protocol":"evalkit-module/1","id":..,"params":..,"rows":N}
//   -> N x {"type":"row","index":i,"columns":{..}}
//   <- {"type":"result","values":{..}} | {"type":"error","message":..}
ScoreFn command_score_fn(const std::string& id, std::vector<std::string> argv,
                         const std::filesystem::path& module_dir) {
  if (argv.empty())
    raise(ErrorCode::InvalidManifest, "command implementation of '" + id +
                                          "' has an empty argv");
  // commands are relative to their module directory
  if (argv[0].rfind("./", 0) == 0 || argv[0].rfind("../", 0) == 0)
    argv[0] = (module_dir / argv[0]).lexically_normal().string();

  return [id, argv](const Table& rows, const json& params) -> ScoreMap {
    LineProcess proc(argv);
    json hello{{"type", "hello"},
               {"protocol", "evalkit-module/1"},
               {"id", id},
               {"params", params},
               {"rows", rows.row_count()}};
    proc.write_line(hello.dump());
    for (std::size_t i = 0; i < rows.row_count(); ++i) {
      json row{{"type", "row"}, {"index", i}, {"columns", table_row_to_json(rows, i)}};
      proc.write_line(row.dump());
    }
    proc.close_stdin();
    auto line = proc.read_line(kExternalModuleTimeoutMs);
    if (!line)
      raise(ErrorCode::ProviderCrash,
            "module '" + id + "' exited without a result; stderr: " +
                proc.stderr_text());
    json reply = json::parse(*line, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("type"))
      raise(ErrorCode::ProviderProtocolViolation,
            "module '" + id + "' sent a malformed reply");
    if (reply["type"] == "error")
      raise(ErrorCode::ProviderCrash,
            "module '" + id + "' reported: " + reply.value("message", "?"));
    if (reply["type"] != "result" || !reply.contains("values"))
      raise(ErrorCode::ProviderProtocolViolation,
            "module '" + id + "' sent an unexpected reply type");
    ScoreMap out;
    for (const auto& [k, v] : reply["values"].items())
      out[k] = score_value_from_json(v);
    return out;
  };
}

ScoreFn bind_implementation(const ModuleManifest& manifest,
                            const std::filesystem::path& dir) {
  json impl = manifest.implementation;
  if (impl.contains("descriptor")) {
    auto desc_path = dir / impl["descriptor"].get<std::string>();
    json desc = json::parse(read_file(desc_path), nullptr, false);
    if (desc.is_discarded())
      raise(ErrorCode::InvalidManifest,
            "implementation descriptor is not valid JSON: " + desc_path.string());
    impl = desc;
  }
  std::string type = impl.value("type", "");
  if (type == "builtin") {
    std::string symbol = impl.value("symbol", manifest.id);
    return canonical_module_spec(symbol).score;
  }
  if (type == "constant")
    return constant_score_fn(manifest.id, impl.value("values", json::object()));
  if (type == "command") {
    std::vector<std::string> argv;
    for (const auto& a : impl.value("argv", json::array()))
      argv.push_back(a.get<std::string>());
    return command_score_fn(manifest.id, std::move(argv), dir);
  }
  raise(ErrorCode::InvalidManifest,
        "module '" + manifest.id + "' has unknown implementation type '" + type + "'");
}

ModuleSpec spec_from_manifest(const ModuleManifest& manifest,
                              const std::filesystem::path& dir) {
  ModuleSpec spec;
  spec.id = manifest.id;
  spec.version = manifest.version;
  spec.kind = manifest.kind;
  spec.features = manifest.features;
  spec.output_schema = manifest.output_schema;
  spec.default_params = manifest.default_params;
  spec.primary_key = manifest.primary_key;
  spec.score = bind_implementation(manifest, dir);
  return spec;
}

bool looks_like_path(const std::string& name) {
  return name.rfind("./", 0) == 0 || name.rfind("../", 0) == 0 ||
         (!name.empty() && name.front() == '/');
}

}  // namespace

// ---------------------------------------------------------------------------
// registry

Registry::Registry(RegistryOptions options) : options_(std::move(options)) {
  if (options_.cache_dir.empty()) {
    if (const char* env = std::getenv("EVALKIT_CACHE_DIR"); env && *env)
      options_.cache_dir = env;
    else
      options_.cache_dir =
          std::filesystem::temp_directory_path() / "evalkit-cache";
  }
}

Registry Registry::with_env_roots() {
  RegistryOptions opts;
  if (const char* env = std::getenv("EVALKIT_REGISTRY_PATH"); env && *env) {
    std::string roots(env);
    std::size_t pos = 0;
    while (pos <= roots.size()) {
      std::size_t colon = roots.find(':', pos);
      std::string part = roots.substr(
          pos, colon == std::string::npos ? std::string::npos : colon - pos);
      if (!part.empty()) opts.local_roots.emplace_back(part);
      if (colon == std::string::npos) break;
      pos = colon + 1;
    }
  }
  return Registry(std::move(opts));
}

std::unique_ptr<EvaluationModule> Registry::load_from_dir(
    const std::filesystem::path& dir, const std::string& source,
    const std::string& revision, const std::string& version) const {
  auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    raise(ErrorCode::InvalidManifest, "no manifest.json in " + dir.string());
  json parsed = json::parse(read_file(manifest_path), nullptr, false);
  if (parsed.is_discarded())
    raise(ErrorCode::InvalidManifest,
          "manifest.json is not valid JSON: " + manifest_path.string());
  ModuleManifest manifest = ModuleManifest::from_json(parsed);
  if (!version.empty() && manifest.version != version)
    raise(ErrorCode::VersionNotFound,
          "module '" + manifest.id + "' at " + dir.string() + " has version " +
              manifest.version + ", requested " + version);

  // a loadable module must carry a complete card
  auto card_path = dir / manifest.card_path;
  if (!std::filesystem::exists(card_path))
    raise(ErrorCode::CardValidationFailure,
          "card file not found: " + card_path.string());
  ValidationReport card_report;
  check_card_text(read_file(card_path), manifest.output_schema, card_report);
  if (!card_report.ok()) {
    std::string msgs;
    for (const auto& v : card_report.violations)
      if (v.severity == Violation::Severity::Error) msgs += v.message + "; ";
    raise(ErrorCode::CardValidationFailure,
          "card for '" + manifest.id + "': " + msgs);
  }

  auto module = std::make_unique<EvaluationModule>(
      spec_from_manifest(manifest, dir), options_.buffer_options);
  module->set_provenance(source, revision.empty() ? manifest.version : revision);
  return module;
}

std::filesystem::path Registry::fetch_git(const GitSource& source,
                                          const std::string& revision_override,
                                          std::string* resolved_revision) const {
  std::string revision =
      revision_override.empty() ? source.revision : revision_override;
  std::string key =
      Sha256::of_string(source.url + "@" + revision).substr(0, 16);
  auto dir = options_.cache_dir / key;
  auto ok_file = dir / ".evalkit_ok";

  std::filesystem::create_directories(options_.cache_dir);
  // lock file serializes concurrent fetches of the same source
  auto lock_path = options_.cache_dir / (key + ".lock");
  int lock_fd = open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (lock_fd < 0) raise(ErrorCode::IOFailure, "cannot open lock file");
  flock(lock_fd, LOCK_EX);
  auto unlock = [&] {
    flock(lock_fd, LOCK_UN);
    close(lock_fd);
  };

  try {
    if (!std::filesystem::exists(ok_file)) {
      std::filesystem::remove_all(dir);
      auto clone = run_command({"git", "clone", "-q", source.url, dir.string()});
      if (clone.exit_code != 0)
        raise(ErrorCode::IOFailure,
              "git clone of " + source.url + " failed: " + clone.err);
      if (!revision.empty()) {
        auto checkout = run_command(
            {"git", "-C", dir.string(), "checkout", "-q", revision});
        if (checkout.exit_code != 0)
          raise(ErrorCode::VersionNotFound,
                "revision '" + revision + "' not found in " + source.url);
      }
      auto head = run_command({"git", "-C", dir.string(), "rev-parse", "HEAD"});
      if (head.exit_code != 0)
        raise(ErrorCode::IOFailure, "git rev-parse failed in " + dir.string());
      std::string hash = head.out;
      while (!hash.empty() && (hash.back() == '\n' || hash.back() == '\r'))
        hash.pop_back();
      write_file(ok_file, hash);
    }
    if (resolved_revision) *resolved_revision = read_file(ok_file);
    unlock();
    return dir;
  } catch (...) {
    unlock();
    throw;
  }
}

std::unique_ptr<EvaluationModule> Registry::load(const std::string& name,
                                                 const std::string& version) const {
  if (looks_like_path(name))
    return load_from_dir(name, "local:" + name, "", version);

  if (!valid_module_name(name))
    raise(ErrorCode::UnknownModule, "invalid module name '" + name + "'");

  std::vector<std::string> searched;
  std::optional<Error> version_miss;

  if (options_.include_builtins) {
    searched.push_back("builtin");
    if (is_canonical_module(name)) {
      ModuleSpec spec = canonical_module_spec(name);
      if (version.empty() || spec.version == version) {
        auto module = std::make_unique<EvaluationModule>(
            std::move(spec), options_.buffer_options);
        module->set_provenance("builtin", kEvalkitVersion);
        return module;
      }
      version_miss = Error(ErrorCode::VersionNotFound,
                           "built-in '" + name + "' is version " + spec.version +
                               ", requested " + version);
    }
  }

  for (const auto& root : options_.local_roots) {
    searched.push_back("local:" + root.string());
    auto dir = root / name;
    if (std::filesystem::exists(dir / "manifest.json")) {
      try {
        return load_from_dir(dir, "local:" + dir.string(), "", version);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::VersionNotFound) {
          version_miss = e;
          continue;  // a later root may carry the requested version
        }
        throw;
      }
    }
  }

  for (const auto& source : options_.git_sources) {
    searched.push_back("git:" + source.url);
    std::string resolved;
    // the version selector doubles as a git revision for git sources
    std::filesystem::path dir;
    try {
      dir = fetch_git(source, version, &resolved);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::VersionNotFound) {
        version_miss = e;
        continue;
      }
      throw;
    }
    if (!std::filesystem::exists(dir / "manifest.json")) continue;
    json parsed = json::parse(read_file(dir / "manifest.json"), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() ||
        parsed.value("id", "") != name)
      continue;
    return load_from_dir(dir, "git:" + source.url, resolved, "");
  }

  if (version_miss) throw *version_miss;
  std::string roots;
  for (std::size_t i = 0; i < searched.size(); ++i)
    roots += (i ? ", " : "") + searched[i];
  raise(ErrorCode::UnknownModule,
        "module '" + name + "' not found; searched roots: [" + roots + "]");
}

std::unique_ptr<CombinedModule> Registry::combine(
    const std::vector<std::string>& names) const {
  if (names.empty()) raise(ErrorCode::EmptyInput, "combine needs module names");
  std::vector<std::unique_ptr<EvaluationModule>> members;
  members.reserve(names.size());
  for (const auto& n : names) members.push_back(load(n));
  return std::make_unique<CombinedModule>(std::move(members),
                                          options_.buffer_options);
}

bool Registry::resolves(const std::string& name) const {
  try {
    (void)load(name);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::optional<bool> Registry::higher_is_better(
    const std::string& metric_key) const {
  if (options_.include_builtins) {
    for (const auto& id : canonical_module_ids()) {
      for (const auto& field : canonical_module_spec(id).output_schema)
        if (field.name == metric_key) {
          if (field.higher_is_better) return field.higher_is_better;
        }
    }
  }
  for (const auto& root : options_.local_roots) {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
      if (!entry.is_directory()) continue;
      auto manifest_path = entry.path() / "manifest.json";
      if (!std::filesystem::exists(manifest_path)) continue;
      json parsed = json::parse(read_file(manifest_path), nullptr, false);
      if (parsed.is_discarded()) continue;
      try {
        ModuleManifest m = ModuleManifest::from_json(parsed);
        for (const auto& field : m.output_schema)
          if (field.name == metric_key && field.higher_is_better)
            return field.higher_is_better;
      } catch (const Error&) {
        continue;
      }
    }
  }
  return std::nullopt;
}

bool Registry::known_metric_key(const std::string& metric_key) const {
  if (options_.include_builtins) {
    for (const auto& id : canonical_module_ids())
      for (const auto& field : canonical_module_spec(id).output_schema)
        if (field.name == metric_key) return true;
  }
  return higher_is_better(metric_key).has_value();
}

// ---------------------------------------------------------------------------
// scaffolding

namespace {

json scaffold_batch(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Metric:
      return json{{"predictions", {"example prediction"}},
                  {"references", {"example reference"}}};
    case ModuleKind::Comparison:
      return json{{"predictions_a", {1, 0}},
                  {"predictions_b", {1, 1}},
                  {"references", {1, 1}}};
    case ModuleKind::Measurement:
      return json{{"data", {"example row", "another row"}}};
  }
  return json::object();
}

json scaffold_features(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::Metric:
      return json::array({{{"name", "predictions"}, {"type", "string"}},
                          {{"name", "references"}, {"type", "string"}}});
    case ModuleKind::Comparison:
      return json::array({{{"name", "predictions_a"}, {"type", "int"}},
                          {{"name", "predictions_b"}, {"type", "int"}},
                          {{"name", "references"}, {"type", "int"}}});
    case ModuleKind::Measurement:
      return json::array({{{"name", "data"}, {"type", "string"}}});
  }
  return json::array();
}

std::string scaffold_card(const std::string& name, ModuleKind kind) {
  std::ostringstream card;
  card << "# " << name << "\n\n";
  card << "## Description\n"
       << "A new " << module_kind_name(kind)
       << " module. Replace this text with what the module computes and the\n"
          "exact formula or procedure behind it.\n\n";
  card << "## Intended Use\n"
       << "Describe the tasks and datasets this module is meant for, and when\n"
          "it should not be used.\n\n";
  card << "## Output Range\n"
       << "`score` is in [0, 1] in this stub. Document the range and\n"
          "direction (higher or lower is better) of every output key.\n\n";
  card << "## Usage Examples\n"
       << "The stub implementation returns score 0.0 for any input; see\n"
          "smoke_test.json for a ready-made batch.\n\n";
  card << "## Limitations and Biases\n"
       << "State known failure modes, populations or languages where the\n"
          "module misleads, and degenerate-input conventions.\n\n";
  card << "## Citation\n"
       << "Add the canonical citation for the method, or state that the\n"
          "module is definitional.\n";
  return card.str();
}

}  // namespace

ScaffoldReport create_scaffold(const std::string& name, ModuleKind kind,
                               const std::filesystem::path& target_dir) {
  if (!name_segment_valid(name))
    raise(ErrorCode::InvalidName,
          "module name '" + name + "' must match [a-z0-9_-]+");
  if (std::filesystem::exists(target_dir) &&
      !std::filesystem::is_empty(target_dir))
    raise(ErrorCode::TargetExists,
          "target directory exists and is not empty: " + target_dir.string());
  std::filesystem::create_directories(target_dir);

  json batch = scaffold_batch(kind);
  json manifest{
      {"id", name},
      {"version", "0.1.0"},
      {"kind", module_kind_name(kind)},
      {"features", scaffold_features(kind)},
      {"output_schema",
       json::array({{{"name", "score"}, {"kind", "number"}, {"higher_is_better", true}}})},
      {"parameters", json::object()},
      {"primary_key", "score"},
      {"card", "card.md"},
      {"implementation", {{"descriptor", "implementation.json"}}},
      {"examples", json::array({{{"batch", batch}}})}};
  json implementation{{"type", "constant"}, {"values", {{"score", 0.0}}}};
  json smoke{{"batch", batch}, {"expected_keys", {"score"}}};

  ScaffoldReport report;
  report.directory = target_dir;
  write_file(target_dir / "manifest.json", manifest.dump(2) + "\n");
  report.files.push_back("manifest.json");
  write_file(target_dir / "card.md", scaffold_card(name, kind));
  report.files.push_back("card.md");
  write_file(target_dir / "implementation.json", implementation.dump(2) + "\n");
  report.files.push_back("implementation.json");
  write_file(target_dir / "smoke_test.json", smoke.dump(2) + "\n");
  report.files.push_back("smoke_test.json");

  auto git = [&](std::vector<std::string> args) {
    std::vector<std::string> argv{"git", "-C", target_dir.string()};
    for (auto& a : args) argv.push_back(std::move(a));
    return run_command(argv);
  };
  if (git({"init", "-q"}).exit_code == 0 && git({"add", "-A"}).exit_code == 0) {
    auto commit = run_command({"git", "-C", target_dir.string(), "-c",
                               "user.name=evalkit", "-c",
                               "user.email=evalkit@localhost", "commit", "-q",
                               "-m", "initial module scaffold"});
    report.git_initialized = commit.exit_code == 0;
  }
  if (!report.git_initialized)
    raise(ErrorCode::IOFailure,
          "git initialization failed in " + target_dir.string());
  return report;
}

}  // namespace evalkit
