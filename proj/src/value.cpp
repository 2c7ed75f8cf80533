#include "lakekit/value.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>

#include <nlohmann/json.hpp>

namespace lakekit {

const char* base_type_name(BaseType t) {
  switch (t) {
    case BaseType::String: return "string";
    case BaseType::Int64: return "int64";
    case BaseType::Float64: return "float64";
    case BaseType::Timestamp: return "timestamp";
    case BaseType::Bool: return "bool";
  }
  return "?";
}

std::string to_string(const ColumnType& t) {
  std::string s = base_type_name(t.base);
  if (t.nullable) s += "?";
  return s;
}

ColumnType parse_column_type(const std::string& text) {
  ColumnType t;
  std::string base = text;
  if (!base.empty() && base.back() == '?') {
    t.nullable = true;
    base.pop_back();
  }
  if (base == "string") t.base = BaseType::String;
  else if (base == "int64") t.base = BaseType::Int64;
  else if (base == "float64") t.base = BaseType::Float64;
  else if (base == "timestamp") t.base = BaseType::Timestamp;
  else if (base == "bool") t.base = BaseType::Bool;
  else throw Error(Errc::TypeMismatch, "unknown type '" + text + "'");
  return t;
}

int64_t parse_iso8601_utc(const std::string& text) {
  // Accepts YYYY-MM-DDTHH:MM:SSZ and the date-only prefix form.
  std::tm tm{};
  int y, mo, d, h = 0, mi = 0, se = 0;
  char tail = 'Z';
  int n = std::sscanf(text.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h,
                      &mi, &se, &tail);
  if (n != 7 && n != 3) {
    // date-only: "%d-%d-%d" leaves n == 3 only when no 'T' follows
    throw Error(Errc::TypeMismatch, "bad timestamp literal '" + text + "'");
  }
  if (n == 7 && tail != 'Z')
    throw Error(Errc::TypeMismatch, "timestamp must be UTC ('Z'): " + text);
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = se;
  time_t t = timegm(&tm);
  return static_cast<int64_t>(t);
}

std::string format_iso8601_utc(int64_t secs) {
  time_t t = static_cast<time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

bool value_matches(BaseType t, const Value& v) {
  switch (t) {
    case BaseType::String: return std::holds_alternative<std::string>(v);
    case BaseType::Int64: return std::holds_alternative<int64_t>(v);
    case BaseType::Float64: return std::holds_alternative<double>(v);
    case BaseType::Timestamp: return std::holds_alternative<Timestamp>(v);
    case BaseType::Bool: return std::holds_alternative<bool>(v);
  }
  return false;
}

nlohmann::json value_to_json(const Value& v) {
  if (is_null(v)) return nullptr;
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  if (auto* i = std::get_if<int64_t>(&v)) return *i;
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* ts = std::get_if<Timestamp>(&v)) return ts->secs;
  return std::get<bool>(v);
}

Value value_from_json(BaseType t, const nlohmann::json& j) {
  if (j.is_null()) return std::monostate{};
  switch (t) {
    case BaseType::String: return j.get<std::string>();
    case BaseType::Int64: return j.get<int64_t>();
    case BaseType::Float64: return j.get<double>();
    case BaseType::Timestamp: return Timestamp{j.get<int64_t>()};
    case BaseType::Bool: return j.get<bool>();
  }
  throw Error(Errc::CorruptObject, "bad value payload");
}

int compare_values(const Value& a, const Value& b) {
  bool na = is_null(a), nb = is_null(b);
  if (na || nb) return na == nb ? 0 : (na ? -1 : 1);
  if (a.index() != b.index())
    throw Error(Errc::TypeMismatch, "comparing values of different types");
  if (a < b) return -1;
  if (b < a) return 1;
  return 0;
}

std::string format_value(const Value& v) {
  if (is_null(v)) return "";
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  if (auto* i = std::get_if<int64_t>(&v)) return std::to_string(*i);
  if (auto* d = std::get_if<double>(&v)) {
    nlohmann::json j = *d;  // shortest round-trip formatting
    return j.dump();
  }
  if (auto* ts = std::get_if<Timestamp>(&v)) return format_iso8601_utc(ts->secs);
  return std::get<bool>(v) ? "true" : "false";
}

namespace {

// Base-type relations, ignoring nullability.
bool base_widen(BaseType from, BaseType to) {
  return from == BaseType::Int64 && to == BaseType::Float64;
}

bool base_narrow(BaseType from, BaseType to) {
  return (from == BaseType::Float64 && to == BaseType::Int64) ||
         (from == BaseType::String && to == BaseType::Timestamp);
}

}  // namespace

bool is_widening(const ColumnType& from, const ColumnType& to) {
  bool base_ok = from.base == to.base || base_widen(from.base, to.base);
  bool null_ok = from.nullable == to.nullable || (!from.nullable && to.nullable);
  return base_ok && null_ok && !(from == to);
}

bool is_narrowing(const ColumnType& from, const ColumnType& to) {
  bool base_ok = from.base == to.base || base_widen(from.base, to.base) ||
                 base_narrow(from.base, to.base);
  bool null_ok = true;  // any nullability transition is expressible by a cast
  bool narrows_base = base_narrow(from.base, to.base);
  bool narrows_null = from.nullable && !to.nullable;
  return base_ok && null_ok && (narrows_base || narrows_null);
}

bool cast_allowed(const ColumnType& from, const ColumnType& to) {
  return from == to || is_widening(from, to) || is_narrowing(from, to);
}

}  // namespace lakekit
