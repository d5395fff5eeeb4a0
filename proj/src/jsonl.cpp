#include "evalkit/jsonl.hpp"

#include <fstream>

namespace evalkit {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IOFailure, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(ErrorCode::DatasetParseError,
            path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
    rows.push_back(std::move(j));
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IOFailure, "cannot write " + path.string());
  for (const auto& row : rows) out << row.dump() << "\n";
  out.flush();
  if (!out) raise(ErrorCode::IOFailure, "write failed: " + path.string());
}

json column_value_to_json(const Column& col, std::size_t row) {
  struct Get {
    std::size_t row;
    json operator()(const IntColumn& v) const { return v.at(row); }
    json operator()(const FloatColumn& v) const { return v.at(row); }
    json operator()(const StringColumn& v) const { return v.at(row); }
    json operator()(const StringSeqColumn& v) const { return v.at(row); }
    json operator()(const FloatSeqColumn& v) const { return v.at(row); }
  };
  return std::visit(Get{row}, col);
}

void append_json_value(Column& col, const json& value, const std::string& name) {
  auto fail = [&](const char* want) {
    raise(ErrorCode::DatasetParseError,
          "column '" + name + "': expected " + want + ", got " +
              std::string(value.type_name()));
  };
  switch (column_type_of(col)) {
    case ColumnType::Int:
      if (!value.is_number_integer() && !value.is_boolean()) fail("integer");
      std::get<IntColumn>(col).push_back(
          value.is_boolean() ? (value.get<bool>() ? 1 : 0)
                             : value.get<std::int64_t>());
      break;
    case ColumnType::Float:
      if (!value.is_number()) fail("number");
      std::get<FloatColumn>(col).push_back(value.get<double>());
      break;
    case ColumnType::String:
      if (!value.is_string()) fail("string");
      std::get<StringColumn>(col).push_back(value.get<std::string>());
      break;
    case ColumnType::StringSeq: {
      if (!value.is_array()) fail("array of strings");
      std::vector<std::string> seq;
      for (const auto& e : value) {
        if (!e.is_string()) fail("array of strings");
        seq.push_back(e.get<std::string>());
      }
      std::get<StringSeqColumn>(col).push_back(std::move(seq));
      break;
    }
    case ColumnType::FloatSeq: {
      if (!value.is_array()) fail("array of numbers");
      std::vector<double> seq;
      for (const auto& e : value) {
        if (!e.is_number()) fail("array of numbers");
        seq.push_back(e.get<double>());
      }
      std::get<FloatSeqColumn>(col).push_back(std::move(seq));
      break;
    }
  }
}

Table table_from_json_rows(const FeatureSchema& schema,
                           const std::vector<json>& rows) {
  Table out(schema);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const json& row = rows[r];
    if (!row.is_object())
      raise(ErrorCode::DatasetParseError,
            "row " + std::to_string(r) + " is not an object");
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& col = schema.columns[c];
      if (!row.contains(col.name))
        raise(ErrorCode::DatasetParseError,
              "row " + std::to_string(r) + " missing column '" + col.name + "'");
      append_json_value(out.columns[c], row[col.name], col.name);
    }
  }
  return out;
}

Batch batch_from_json(const FeatureSchema& schema, const json& obj) {
  if (!obj.is_object())
    raise(ErrorCode::SchemaMismatch, "batch must be a JSON object of arrays");
  Batch batch;
  for (const auto& [name, values] : obj.items()) {
    int idx = schema.index_of(name);
    if (idx < 0) raise(ErrorCode::SchemaMismatch, "unexpected column '" + name + "'");
    if (!values.is_array())
      raise(ErrorCode::SchemaMismatch, "column '" + name + "' must be an array");
    Column col = empty_column(schema.columns[std::size_t(idx)].type);
    for (const auto& v : values) append_json_value(col, v, name);
    batch.set(name, std::move(col));
  }
  return batch;
}

json table_row_to_json(const Table& table, std::size_t row) {
  json out = json::object();
  for (std::size_t c = 0; c < table.schema.size(); ++c)
    out[table.schema.columns[c].name] = column_value_to_json(table.columns[c], row);
  return out;
}

}  // namespace evalkit
