#include "lakekit/schema.hpp"

#include <nlohmann/json.hpp>

namespace lakekit {

const char* origin_kind_name(OriginKind k) {
  switch (k) {
    case OriginKind::Fresh: return "fresh";
    case OriginKind::Inherited: return "inherited";
    case OriginKind::InheritedNarrowed: return "inherited_narrowed";
    case OriginKind::InheritedNotNull: return "inherited_notnull";
  }
  return "?";
}

namespace {

OriginKind origin_kind_from_name(const std::string& s) {
  if (s == "fresh") return OriginKind::Fresh;
  if (s == "inherited") return OriginKind::Inherited;
  if (s == "inherited_narrowed") return OriginKind::InheritedNarrowed;
  if (s == "inherited_notnull") return OriginKind::InheritedNotNull;
  throw Error(Errc::CorruptObject, "bad origin kind '" + s + "'");
}

}  // namespace

const ColumnContract* SchemaContract::find(const std::string& column) const {
  for (const auto& c : columns)
    if (c.name == column) return &c;
  return nullptr;
}

int SchemaContract::index_of(const std::string& column) const {
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == column) return static_cast<int>(i);
  return -1;
}

bool SchemaContract::same_shape(const SchemaContract& other) const {
  if (columns.size() != other.columns.size()) return false;
  for (size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name != other.columns[i].name ||
        columns[i].type != other.columns[i].type)
      return false;
  return true;
}

nlohmann::json SchemaContract::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json jc{{"name", c.name},
                      {"type", to_string(c.type)},
                      {"origin", origin_kind_name(c.origin.kind)}};
    if (c.origin.kind != OriginKind::Fresh) {
      jc["origin_schema"] = c.origin.schema;
      jc["origin_column"] = c.origin.column;
    }
    cols.push_back(jc);
  }
  return nlohmann::json{{"name", name}, {"columns", cols}};
}

SchemaContract SchemaContract::from_json(const nlohmann::json& j) {
  SchemaContract s;
  s.name = j.at("name").get<std::string>();
  for (const auto& jc : j.at("columns")) {
    ColumnContract c;
    c.name = jc.at("name").get<std::string>();
    c.type = parse_column_type(jc.at("type").get<std::string>());
    c.origin.kind = origin_kind_from_name(jc.at("origin").get<std::string>());
    if (c.origin.kind != OriginKind::Fresh) {
      c.origin.schema = jc.at("origin_schema").get<std::string>();
      c.origin.column = jc.at("origin_column").get<std::string>();
    }
    s.columns.push_back(std::move(c));
  }
  return s;
}

}  // namespace lakekit
