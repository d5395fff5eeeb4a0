#include "evalkit/schema.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "evalkit/hash.hpp"

namespace evalkit {

const char* column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Int: return "int";
    case ColumnType::Float: return "float";
    case ColumnType::String: return "string";
    case ColumnType::StringSeq: return "string_seq";
    case ColumnType::FloatSeq: return "float_seq";
  }
  return "?";
}

ColumnType column_type_from_name(const std::string& name) {
  if (name == "int") return ColumnType::Int;
  if (name == "float") return ColumnType::Float;
  if (name == "string") return ColumnType::String;
  if (name == "string_seq") return ColumnType::StringSeq;
  if (name == "float_seq") return ColumnType::FloatSeq;
  raise(ErrorCode::InvalidManifest, "unknown column type: " + name);
}

ColumnType column_type_of(const Column& col) {
  return static_cast<ColumnType>(col.index());
}

std::size_t column_size(const Column& col) {
  return std::visit([](const auto& v) { return v.size(); }, col);
}

Column empty_column(ColumnType t) {
  switch (t) {
    case ColumnType::Int: return IntColumn{};
    case ColumnType::Float: return FloatColumn{};
    case ColumnType::String: return StringColumn{};
    case ColumnType::StringSeq: return StringSeqColumn{};
    case ColumnType::FloatSeq: return FloatSeqColumn{};
  }
  return IntColumn{};
}

void append_column(Column& dst, const Column& src) {
  if (dst.index() != src.index())
    raise(ErrorCode::IncompatibleSchemas, "column type mismatch on append");
  std::visit(
      [&](auto& d) {
        using V = std::decay_t<decltype(d)>;
        const auto& s = std::get<V>(src);
        d.insert(d.end(), s.begin(), s.end());
      },
      dst);
}

Column take_rows(const Column& col, const std::vector<std::size_t>& indices) {
  return std::visit(
      [&](const auto& v) -> Column {
        std::decay_t<decltype(v)> out;
        out.reserve(indices.size());
        for (std::size_t i : indices) out.push_back(v.at(i));
        return out;
      },
      col);
}

namespace {

std::size_t string_encoded_bytes(const std::string& s) { return 4 + s.size(); }

}  // namespace

std::size_t column_encoded_bytes(const Column& col) {
  struct Sizer {
    std::size_t operator()(const IntColumn& v) const { return v.size() * 8; }
    std::size_t operator()(const FloatColumn& v) const { return v.size() * 8; }
    std::size_t operator()(const StringColumn& v) const {
      std::size_t n = 0;
      for (const auto& s : v) n += string_encoded_bytes(s);
      return n;
    }
    std::size_t operator()(const StringSeqColumn& v) const {
      std::size_t n = 0;
      for (const auto& seq : v) {
        n += 4;
        for (const auto& s : seq) n += string_encoded_bytes(s);
      }
      return n;
    }
    std::size_t operator()(const FloatSeqColumn& v) const {
      std::size_t n = 0;
      for (const auto& seq : v) n += 4 + seq.size() * 8;
      return n;
    }
  };
  return std::visit(Sizer{}, col);
}

FeatureSchema::FeatureSchema(std::initializer_list<FeatureColumn> cols)
    : columns(cols) {
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (!seen.insert(c.name).second)
      raise(ErrorCode::SchemaMismatch, "duplicate column name: " + c.name);
  }
}

int FeatureSchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return int(i);
  return -1;
}

std::string FeatureSchema::to_string() const {
  std::ostringstream os;
  for (const auto& c : columns)
    os << c.name << ":" << column_type_name(c.type) << ";";
  return os.str();
}

std::uint64_t FeatureSchema::fingerprint() const {
  return fnv1a64(to_string());
}

const Column* Batch::find(const std::string& name) const {
  for (const auto& [n, c] : columns)
    if (n == name) return &c;
  return nullptr;
}

Table::Table(FeatureSchema s) : schema(std::move(s)) {
  for (const auto& c : schema.columns) columns.push_back(empty_column(c.type));
}

std::size_t Table::row_count() const {
  return columns.empty() ? 0 : column_size(columns.front());
}

const Column& Table::column(const std::string& name) const {
  int idx = schema.index_of(name);
  if (idx < 0) raise(ErrorCode::SchemaMismatch, "no such column: " + name);
  return columns[std::size_t(idx)];
}

Table batch_to_table(const FeatureSchema& schema, const Batch& batch) {
  if (batch.columns.size() != schema.size())
    raise(ErrorCode::SchemaMismatch,
          "expected " + std::to_string(schema.size()) + " columns, got " +
              std::to_string(batch.columns.size()));
  Table out(schema);
  std::size_t rows = 0;
  bool first = true;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& want = schema.columns[i];
    const Column* col = batch.find(want.name);
    if (!col) raise(ErrorCode::SchemaMismatch, "missing column: " + want.name);
    if (column_type_of(*col) != want.type)
      raise(ErrorCode::SchemaMismatch,
            "column '" + want.name + "' has type " +
                column_type_name(column_type_of(*col)) + ", expected " +
                column_type_name(want.type));
    std::size_t n = column_size(*col);
    if (first) {
      rows = n;
      first = false;
    } else if (n != rows) {
      raise(ErrorCode::RaggedBatch,
            "column '" + want.name + "' has " + std::to_string(n) +
                " rows, expected " + std::to_string(rows));
    }
    out.columns[i] = *col;
  }
  if (rows == 0) raise(ErrorCode::EmptyBatch, "batch has zero rows");
  return out;
}

void Table::append_batch(const Batch& batch) {
  append_table(batch_to_table(schema, batch));
}

void Table::append_table(const Table& other) {
  if (!(other.schema == schema))
    raise(ErrorCode::IncompatibleSchemas, "table schemas differ");
  for (std::size_t i = 0; i < columns.size(); ++i)
    append_column(columns[i], other.columns[i]);
}

Table Table::select(const std::vector<std::size_t>& indices) const {
  Table out(schema);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out.columns[i] = take_rows(columns[i], indices);
  return out;
}

}  // namespace evalkit
