#include "lakekit/conformance.hpp"

#include <sstream>

namespace lakekit {

std::string ConformanceReport::summary() const {
  std::ostringstream out;
  for (const auto& v : violations) {
    out << v.code << " " << v.column;
    if (v.row >= 0) out << " row " << v.row;
    out << ": " << v.message << "\n";
  }
  return out.str();
}

ConformanceReport validate_data(const Table& data, const SchemaContract& contract,
                                const std::set<std::string>& skip_nonnull) {
  ConformanceReport rep;
  for (const auto& col : contract.columns) {
    if (data.schema.index_of(col.name) < 0)
      rep.violations.push_back({"MissingColumn", col.name, -1,
                                "declared column absent from data"});
  }
  for (const auto& col : data.schema.columns) {
    if (!contract.find(col.name))
      rep.violations.push_back({"ExtraColumn", col.name, -1,
                                "column not declared in contract"});
  }
  for (const auto& col : contract.columns) {
    int idx = data.schema.index_of(col.name);
    if (idx < 0) continue;
    bool check_null = !col.type.nullable && !skip_nonnull.count(col.name);
    for (size_t r = 0; r < data.rows.size(); ++r) {
      const Value& v = data.rows[r][static_cast<size_t>(idx)];
      if (is_null(v)) {
        if (check_null)
          rep.violations.push_back({"UnexpectedNull", col.name,
                                    static_cast<long>(r),
                                    "null in non-nullable column"});
        continue;
      }
      if (!value_matches(col.type.base, v))
        rep.violations.push_back({"TypeMismatch", col.name,
                                  static_cast<long>(r),
                                  "value does not match declared type " +
                                      to_string(col.type)});
    }
  }
  return rep;
}

}  // namespace lakekit
