#include "lakekit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "lakekit/errors.hpp"

namespace lakekit::lang {

namespace {

// Columns visible to expressions plus the materialized rows beneath them.
struct Frame {
  struct Col {
    std::vector<std::string> qualifiers;
    std::string name;
    ColumnType type;
  };
  std::vector<Col> cols;
  std::vector<Row> rows;

  size_t resolve(const std::string& ref) const {
    auto dot = ref.find('.');
    std::string qual = dot == std::string::npos ? "" : ref.substr(0, dot);
    std::string name = dot == std::string::npos ? ref : ref.substr(dot + 1);
    for (size_t i = 0; i < cols.size(); ++i) {
      if (cols[i].name != name) continue;
      if (!qual.empty() && std::find(cols[i].qualifiers.begin(),
                                     cols[i].qualifiers.end(),
                                     qual) == cols[i].qualifiers.end())
        continue;
      return i;  // inference already rejected ambiguous references
    }
    throw Error(Errc::UnknownColumn, "unknown column '" + ref + "'");
  }
};

[[noreturn]] void overflow(const std::string& what, size_t row) {
  std::ostringstream out;
  out << what << " overflowed at row " << row;
  throw Error(Errc::Overflow, out.str());
}

double as_double(const Value& v) {
  if (auto* d = std::get_if<double>(&v)) return *d;
  return static_cast<double>(std::get<int64_t>(v));
}

Value cast_value(const Value& v, const ColumnType& from, const ColumnType& to,
                 size_t row) {
  if (is_null(v)) {
    if (!to.nullable) {
      std::ostringstream out;
      out << "cast to non-nullable " << to_string(to) << " hit null at row "
          << row;
      throw Error(Errc::RuntimeCastNull, out.str());
    }
    return v;
  }
  if (from.base == to.base) return v;
  if (from.base == BaseType::Int64 && to.base == BaseType::Float64)
    return Value{static_cast<double>(std::get<int64_t>(v))};
  if (from.base == BaseType::Float64 && to.base == BaseType::Int64) {
    double d = std::trunc(std::get<double>(v));  // toward zero
    if (std::isnan(d) || d < -9223372036854775808.0 ||
        d >= 9223372036854775808.0)
      overflow("cast to int64", row);
    return Value{static_cast<int64_t>(d)};
  }
  if (from.base == BaseType::String && to.base == BaseType::Timestamp) {
    try {
      return Value{Timestamp{parse_iso8601_utc(std::get<std::string>(v))}};
    } catch (const Error&) {
      // a malformed timestamp is bad input data, not a plan-time type error
      std::ostringstream out;
      out << "unparsable timestamp '" << std::get<std::string>(v)
          << "' at row " << row;
      throw Error(Errc::InputContractViolation, out.str());
    }
  }
  throw Error(Errc::TypeMismatch, "no runtime cast from " + to_string(from) +
                                      " to " + to_string(to));
}

// Static type of an expression for runtime cast dispatch. Nullability is
// irrelevant here; only the base matters.
ColumnType static_type(const Expr& e, const Frame& f) {
  switch (e.kind) {
    case Expr::Kind::ColRef: return f.cols[f.resolve(e.column)].type;
    case Expr::Kind::Lit:
      return e.lit_type ? *e.lit_type : ColumnType{BaseType::String, true};
    case Expr::Kind::Cast: return e.target;
    case Expr::Kind::IsNotNull:
    case Expr::Kind::Lt:
    case Expr::Kind::And: return {BaseType::Bool, true};
    case Expr::Kind::Sub: {
      ColumnType a = static_type(*e.a, f), b = static_type(*e.b, f);
      bool fl = a.base == BaseType::Float64 || b.base == BaseType::Float64;
      return {fl ? BaseType::Float64 : BaseType::Int64, true};
    }
    default: {  // SumAgg
      return {static_type(*e.a, f).base, false};
    }
  }
}

Value eval_expr(const Expr& e, const Frame& f, const Row& row, size_t row_no) {
  switch (e.kind) {
    case Expr::Kind::ColRef:
      return row[f.resolve(e.column)];
    case Expr::Kind::Lit:
      return e.value;
    case Expr::Kind::Cast:
      return cast_value(eval_expr(*e.a, f, row, row_no), static_type(*e.a, f),
                        e.target, row_no);
    case Expr::Kind::IsNotNull:
      return Value{!is_null(eval_expr(*e.a, f, row, row_no))};
    case Expr::Kind::Sub: {
      Value a = eval_expr(*e.a, f, row, row_no);
      Value b = eval_expr(*e.b, f, row, row_no);
      if (is_null(a) || is_null(b)) return Value{};
      if (std::holds_alternative<int64_t>(a) &&
          std::holds_alternative<int64_t>(b)) {
        int64_t r;
        if (__builtin_sub_overflow(std::get<int64_t>(a), std::get<int64_t>(b),
                                   &r))
          overflow("int64 subtraction", row_no);
        return Value{r};
      }
      return Value{as_double(a) - as_double(b)};
    }
    case Expr::Kind::Lt: {
      Value a = eval_expr(*e.a, f, row, row_no);
      Value b = eval_expr(*e.b, f, row, row_no);
      if (is_null(a) || is_null(b)) return Value{};
      if ((std::holds_alternative<int64_t>(a) ||
           std::holds_alternative<double>(a)) &&
          (std::holds_alternative<int64_t>(b) ||
           std::holds_alternative<double>(b)) &&
          a.index() != b.index())
        return Value{as_double(a) < as_double(b)};
      return Value{compare_values(a, b) < 0};
    }
    case Expr::Kind::And: {
      Value a = eval_expr(*e.a, f, row, row_no);
      Value b = eval_expr(*e.b, f, row, row_no);
      // three-valued: false dominates null
      if ((!is_null(a) && !std::get<bool>(a)) ||
          (!is_null(b) && !std::get<bool>(b)))
        return Value{false};
      if (is_null(a) || is_null(b)) return Value{};
      return Value{true};
    }
    default:
      throw Error(Errc::TypeMismatch, "sum() outside group by");
  }
}

Frame frame_of_table(const std::string& name, const Table& t) {
  Frame f;
  for (const auto& col : t.schema.columns)
    f.cols.push_back({{name}, col.name, col.type});
  f.rows = t.rows;
  return f;
}

Frame build_frame(const Transform& t, const std::map<std::string, Table>& in) {
  switch (t.kind) {
    case Transform::Kind::Unit: {
      Frame f;
      f.rows.push_back({});
      return f;
    }
    case Transform::Kind::Input: {
      auto it = in.find(t.input);
      if (it == in.end())
        throw Error(Errc::NoSuchTable, "no input table '" + t.input + "'");
      return frame_of_table(t.input, it->second);
    }
    case Transform::Kind::Join: {
      Frame left = build_frame(*t.child, in);
      Frame right = build_frame(*t.right, in);
      const std::string& lname = t.child->input;
      const std::string& rname = t.right->input;
      std::set<std::string> keys(t.join_keys.begin(), t.join_keys.end());

      Frame f;
      std::vector<size_t> lkeep, rkeep, lkey, rkey;
      for (size_t i = 0; i < left.cols.size(); ++i) {
        if (keys.count(left.cols[i].name)) {
          lkey.push_back(i);
          rkey.push_back(right.resolve(left.cols[i].name));
          Frame::Col c = left.cols[i];
          c.qualifiers = {lname, rname};
          c.type.nullable = false;
          f.cols.push_back(c);
          lkeep.push_back(i);
        } else {
          f.cols.push_back(left.cols[i]);
          lkeep.push_back(i);
        }
      }
      for (size_t i = 0; i < right.cols.size(); ++i)
        if (!keys.count(right.cols[i].name)) {
          f.cols.push_back(right.cols[i]);
          rkeep.push_back(i);
        }

      for (const Row& lr : left.rows) {
        for (const Row& rr : right.rows) {
          bool match = true;
          for (size_t k = 0; k < lkey.size(); ++k) {
            const Value& a = lr[lkey[k]];
            const Value& b = rr[rkey[k]];
            if (is_null(a) || is_null(b) || compare_values(a, b) != 0) {
              match = false;
              break;
            }
          }
          if (!match) continue;
          Row out;
          for (size_t i : lkeep) out.push_back(lr[i]);
          for (size_t i : rkeep) out.push_back(rr[i]);
          f.rows.push_back(std::move(out));
        }
      }
      return f;
    }
    case Transform::Kind::Filter: {
      Frame f = build_frame(*t.child, in);
      std::vector<Row> kept;
      for (size_t i = 0; i < f.rows.size(); ++i) {
        Value v = eval_expr(*t.predicate, f, f.rows[i], i);
        if (!is_null(v) && std::get<bool>(v)) kept.push_back(f.rows[i]);
      }
      f.rows = std::move(kept);
      return f;
    }
    default:
      throw Error(Errc::SyntaxError, "malformed transform tree");
  }
}

}  // namespace

Table evaluate(const Transform& t, const std::map<std::string, Table>& inputs) {
  std::map<std::string, SchemaContract> schemas;
  for (const auto& [name, table] : inputs) {
    schemas[name] = table.schema;
    schemas[name].name = name;
  }
  Inference inf = infer_schema(t, schemas);

  Table out;
  out.schema = inf.schema;
  Frame f = build_frame(*t.child, inputs);

  if (t.kind == Transform::Kind::Select) {
    for (size_t r = 0; r < f.rows.size(); ++r) {
      Row row;
      for (const auto& item : t.items)
        row.push_back(eval_expr(*item.expr, f, f.rows[r], r));
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  // Aggregate: group rows by key tuple, sum the rest, emit in key order.
  std::vector<size_t> key_idx;
  for (const auto& g : t.group_by) key_idx.push_back(f.resolve(g));

  struct KeyLess {
    bool operator()(const Row& a, const Row& b) const {
      for (size_t i = 0; i < a.size(); ++i) {
        int c = compare_values(a[i], b[i]);
        if (c) return c < 0;
      }
      return false;
    }
  };
  std::map<Row, std::vector<size_t>, KeyLess> groups;
  for (size_t r = 0; r < f.rows.size(); ++r) {
    Row key;
    for (size_t i : key_idx) key.push_back(f.rows[r][i]);
    groups[std::move(key)].push_back(r);
  }

  for (const auto& [key, members] : groups) {
    Row row;
    for (const auto& item : t.items) {
      if (item.expr->kind == Expr::Kind::ColRef) {
        size_t idx = f.resolve(item.expr->column);
        row.push_back(f.rows[members.front()][idx]);
        continue;
      }
      // sum(expr), null operands skipped
      const Expr& inner = *item.expr->a;
      bool to_float = static_type(inner, f).base == BaseType::Float64;
      int64_t isum = 0;
      double dsum = 0.0;
      for (size_t r : members) {
        Value v = eval_expr(inner, f, f.rows[r], r);
        if (is_null(v)) continue;
        if (to_float) {
          dsum += as_double(v);
        } else if (__builtin_add_overflow(isum, std::get<int64_t>(v), &isum)) {
          overflow("sum", r);
        }
      }
      row.push_back(to_float ? Value{dsum} : Value{isum});
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace lakekit::lang
