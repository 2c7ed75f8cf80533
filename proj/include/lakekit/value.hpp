#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lakekit/errors.hpp"

namespace lakekit {

enum class BaseType { String, Int64, Float64, Timestamp, Bool };

struct ColumnType {
  BaseType base = BaseType::String;
  bool nullable = false;

  bool operator==(const ColumnType&) const = default;
};

const char* base_type_name(BaseType t);
std::string to_string(const ColumnType& t);  // e.g. "float64", "string?"
ColumnType parse_column_type(const std::string& text);

/// Seconds since the Unix epoch, UTC. Literals are ISO-8601.
struct Timestamp {
  int64_t secs = 0;
  auto operator<=>(const Timestamp&) const = default;
};

int64_t parse_iso8601_utc(const std::string& text);  // throws TypeMismatch
std::string format_iso8601_utc(int64_t secs);

using Value = std::variant<std::monostate, std::string, int64_t, double,
                           Timestamp, bool>;
using Row = std::vector<Value>;

inline bool is_null(const Value& v) {
  return std::holds_alternative<std::monostate>(v);
}

bool value_matches(BaseType t, const Value& v);  // null never matches

nlohmann::json value_to_json(const Value& v);
Value value_from_json(BaseType t, const nlohmann::json& j);

/// Total order used for group-by key sorting; nulls sort first.
int compare_values(const Value& a, const Value& b);

/// Display form (timestamps as ISO-8601, null as empty string).
std::string format_value(const Value& v);

// Type lattice. Widening is implicit-legal; narrowing needs an explicit
// cast. Anything else is a type error.
bool is_widening(const ColumnType& from, const ColumnType& to);
bool is_narrowing(const ColumnType& from, const ColumnType& to);
bool cast_allowed(const ColumnType& from, const ColumnType& to);

}  // namespace lakekit
