#include "lakekit/csv.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "lakekit/errors.hpp"

namespace lakekit {

namespace {

struct Cell {
  std::string text;
  bool quoted = false;
};

[[noreturn]] void bad(int line, const std::string& what) {
  throw Error(Errc::CsvParseError, "line " + std::to_string(line) + ": " + what);
}

std::vector<Cell> split_line(const std::string& line, int lineno) {
  std::vector<Cell> cells;
  Cell cur;
  size_t i = 0;
  bool in_quotes = false;
  while (i < line.size()) {
    char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.text += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        cur.text += c;
        ++i;
      }
    } else if (c == '"') {
      if (!cur.text.empty()) bad(lineno, "quote inside unquoted cell");
      cur.quoted = true;
      in_quotes = true;
      ++i;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur = {};
      ++i;
    } else {
      cur.text += c;
      ++i;
    }
  }
  if (in_quotes) bad(lineno, "unterminated quote");
  cells.push_back(std::move(cur));
  return cells;
}

Value parse_cell(const Cell& cell, const ColumnContract& col, int lineno) {
  if (cell.text.empty() && !cell.quoted) {
    if (!col.type.nullable)
      throw Error(Errc::NullInNonNullable,
                  "column '" + col.name + "' at line " + std::to_string(lineno));
    return Value{};
  }
  const std::string& s = cell.text;
  switch (col.type.base) {
    case BaseType::String:
      return s;
    case BaseType::Int64: {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size())
        bad(lineno, "'" + s + "' is not an int64");
      return v;
    }
    case BaseType::Float64: {
      double v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc{} || p != s.data() + s.size())
        bad(lineno, "'" + s + "' is not a float64");
      return v;
    }
    case BaseType::Bool:
      if (s == "true") return true;
      if (s == "false") return false;
      bad(lineno, "'" + s + "' is not a bool");
    case BaseType::Timestamp:
      try {
        return Timestamp{parse_iso8601_utc(s)};
      } catch (const Error&) {
        bad(lineno, "'" + s + "' is not an ISO-8601 timestamp");
      }
  }
  bad(lineno, "unknown column type");
}

SchemaContract parse_header(const std::string& line,
                            const std::string& schema_name) {
  SchemaContract schema;
  schema.name = schema_name;
  std::set<std::string> seen;
  for (const Cell& cell : split_line(line, 1)) {
    auto colon = cell.text.find(':');
    if (colon == std::string::npos || colon == 0)
      bad(1, "header cell '" + cell.text + "' is not name:type");
    ColumnContract col;
    col.name = cell.text.substr(0, colon);
    try {
      col.type = parse_column_type(cell.text.substr(colon + 1));
    } catch (const Error& e) {
      bad(1, e.message());
    }
    if (!seen.insert(col.name).second)
      bad(1, "duplicate column '" + col.name + "'");
    schema.columns.push_back(std::move(col));
  }
  return schema;
}

}  // namespace

Table read_csv(std::istream& in, const std::string& schema_name) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(Errc::CsvParseError, "line 1: missing typed header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  Table t;
  t.schema = parse_header(line, schema_name);

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<Cell> cells = split_line(line, lineno);
    if (cells.size() != t.schema.columns.size())
      bad(lineno, "expected " + std::to_string(t.schema.columns.size()) +
                      " cells, got " + std::to_string(cells.size()));
    Row row;
    for (size_t i = 0; i < cells.size(); ++i)
      row.push_back(parse_cell(cells[i], t.schema.columns[i], lineno));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table read_csv_file(const std::filesystem::path& path,
                    const std::string& schema_name) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  return read_csv(in, schema_name);
}

}  // namespace lakekit
