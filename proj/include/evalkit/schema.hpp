#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "evalkit/error.hpp"

namespace evalkit {

enum class ColumnType { Int, Float, String, StringSeq, FloatSeq };

const char* column_type_name(ColumnType t);
ColumnType column_type_from_name(const std::string& name);

using IntColumn = std::vector<int64_t>;
using FloatColumn = std::vector<double>;
using StringColumn = std::vector<std::string>;
using StringSeqColumn = std::vector<std::vector<std::string>>;
using FloatSeqColumn = std::vector<std::vector<double>>;

using Column = std::variant<IntColumn, FloatColumn, StringColumn,
                            StringSeqColumn, FloatSeqColumn>;

ColumnType column_type_of(const Column& col);
std::size_t column_size(const Column& col);
Column empty_column(ColumnType t);
void append_column(Column& dst, const Column& src);
Column take_rows(const Column& col, const std::vector<std::size_t>& indices);

// Encoded byte size of one column, matching the on-disk spill encoding.
// Used for the accumulator's in-memory accounting.
std::size_t column_encoded_bytes(const Column& col);

struct FeatureColumn {
  std::string name;
  ColumnType type;
  bool operator==(const FeatureColumn&) const = default;
};

struct FeatureSchema {
  std::vector<FeatureColumn> columns;

  FeatureSchema() = default;
  FeatureSchema(std::initializer_list<FeatureColumn> cols);

  bool operator==(const FeatureSchema&) const = default;

  std::size_t size() const { return columns.size(); }
  // -1 when absent
  int index_of(const std::string& name) const;
  std::string to_string() const;   // "name:type;name:type;..."
  std::uint64_t fingerprint() const;
};

// Named columns as handed to add_batch; order-insensitive by name.
struct Batch {
  std::vector<std::pair<std::string, Column>> columns;

  Batch() = default;
  Batch& set(std::string name, Column col) {
    columns.emplace_back(std::move(name), std::move(col));
    return *this;
  }
  const Column* find(const std::string& name) const;
  bool empty() const { return columns.empty(); }
};

// Schema-ordered rows; columns[i] matches schema.columns[i].
struct Table {
  FeatureSchema schema;
  std::vector<Column> columns;

  Table() = default;
  explicit Table(FeatureSchema s);

  std::size_t row_count() const;
  const Column& column(const std::string& name) const;

  // Validates `batch` against `schema` (exact column set, types, equal
  // row counts >= 1) and appends. Throws SchemaMismatch / RaggedBatch.
  void append_batch(const Batch& batch);
  void append_table(const Table& other);
  Table select(const std::vector<std::size_t>& indices) const;
};

// Checks a batch against a schema and returns it as a schema-ordered table
// without copying more than once. Shared by Table::append_batch and the
// columnar buffer.
Table batch_to_table(const FeatureSchema& schema, const Batch& batch);

}  // namespace evalkit
