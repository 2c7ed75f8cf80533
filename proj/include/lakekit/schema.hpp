#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lakekit/value.hpp"

namespace lakekit {

enum class OriginKind { Fresh, Inherited, InheritedNarrowed, InheritedNotNull };

const char* origin_kind_name(OriginKind k);

struct ColumnOrigin {
  OriginKind kind = OriginKind::Fresh;
  std::string schema;  // upstream schema name, empty for Fresh
  std::string column;  // upstream column name, empty for Fresh

  bool operator==(const ColumnOrigin&) const = default;
};

struct ColumnContract {
  std::string name;
  ColumnType type;
  ColumnOrigin origin;

  bool operator==(const ColumnContract&) const = default;
};

struct SchemaContract {
  std::string name;
  std::vector<ColumnContract> columns;

  const ColumnContract* find(const std::string& column) const;
  int index_of(const std::string& column) const;  // -1 if absent

  /// Same column names, types and order; origins and schema name ignored.
  bool same_shape(const SchemaContract& other) const;

  nlohmann::json to_json() const;
  static SchemaContract from_json(const nlohmann::json& j);

  bool operator==(const SchemaContract&) const = default;
};

/// An in-memory materialized table: a schema plus row-major data.
struct Table {
  SchemaContract schema;
  std::vector<Row> rows;
};

}  // namespace lakekit
