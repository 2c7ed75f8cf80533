#pragma once

#include <filesystem>
#include <istream>
#include <string>

#include "lakekit/schema.hpp"

namespace lakekit {

/// Reads a typed-header CSV: the first line is `name:type[?], ...` with
/// `?` marking a nullable column, every later line one row. An empty
/// unquoted cell is null; quotes make an empty string explicit and
/// double up to escape. Throws CsvParseError with the offending line
/// number, or NullInNonNullable when a null hits a non-null column.
Table read_csv(std::istream& in, const std::string& schema_name = "csv");

Table read_csv_file(const std::filesystem::path& path,
                    const std::string& schema_name = "csv");

}  // namespace lakekit
