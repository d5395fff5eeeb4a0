#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evalkit/schema.hpp"

namespace evalkit {

using json = nlohmann::json;

// One JSON object per line; blank lines are ignored. Parse failures raise
// DatasetParseError naming the line.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& rows);

json column_value_to_json(const Column& col, std::size_t row);
void append_json_value(Column& col, const json& value, const std::string& name);

// Rows -> schema-ordered table. Missing columns and type mismatches raise
// DatasetParseError.
Table table_from_json_rows(const FeatureSchema& schema,
                           const std::vector<json>& rows);

// {"col": [v, v, ...], ...} -> Batch, using the schema to fix column types.
Batch batch_from_json(const FeatureSchema& schema, const json& obj);

json table_row_to_json(const Table& table, std::size_t row);

}  // namespace evalkit
