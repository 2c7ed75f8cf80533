#include "lakekit/infer.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "lakekit/errors.hpp"

namespace lakekit::lang {

namespace {

// A column visible to expressions, with the lineage it would carry if
// projected unchanged.
struct Binding {
  std::vector<std::string> qualifiers;  // join keys are visible via both sides
  std::string name;
  ColumnType type;
  LineageKind kind = LineageKind::Identity;
  std::string src_table, src_column;
};

struct Env {
  std::vector<Binding> bindings;

  Binding& resolve(const std::string& ref) {
    auto dot = ref.find('.');
    std::string qual = dot == std::string::npos ? "" : ref.substr(0, dot);
    std::string name = dot == std::string::npos ? ref : ref.substr(dot + 1);
    Binding* hit = nullptr;
    for (auto& b : bindings) {
      if (b.name != name) continue;
      if (!qual.empty() &&
          std::find(b.qualifiers.begin(), b.qualifiers.end(), qual) ==
              b.qualifiers.end())
        continue;
      if (hit)
        throw Error(Errc::TypeMismatch,
                    "ambiguous column '" + ref + "', qualify it");
      hit = &b;
    }
    if (!hit) {
      std::ostringstream out;
      out << "unknown column '" << ref << "'; available:";
      for (const auto& b : bindings) out << " " << b.name;
      throw Error(Errc::UnknownColumn, out.str());
    }
    return *hit;
  }
};

bool is_numeric(BaseType t) {
  return t == BaseType::Int64 || t == BaseType::Float64;
}

struct ExprInfo {
  ColumnType type;
  LineageKind kind = LineageKind::Fresh;
  std::string src_table, src_column;  // set unless kind == Fresh
  bool narrowed = false;              // Cast only
};

ExprInfo type_expr(const Expr& e, Env& env, bool allow_sum);

ExprInfo type_binary(const Expr& e, Env& env, bool allow_sum) {
  ExprInfo a = type_expr(*e.a, env, allow_sum);
  ExprInfo b = type_expr(*e.b, env, allow_sum);
  bool nullable = a.type.nullable || b.type.nullable;
  switch (e.kind) {
    case Expr::Kind::Sub: {
      if (!is_numeric(a.type.base) || !is_numeric(b.type.base))
        throw Error(Errc::TypeMismatch, "'-' needs numeric operands, got " +
                                            to_string(a.type) + " and " +
                                            to_string(b.type));
      BaseType base = (a.type.base == BaseType::Float64 ||
                       b.type.base == BaseType::Float64)
                          ? BaseType::Float64
                          : BaseType::Int64;
      return {{base, nullable}};
    }
    case Expr::Kind::Lt: {
      bool ok = (is_numeric(a.type.base) && is_numeric(b.type.base)) ||
                a.type.base == b.type.base;
      if (!ok || a.type.base == BaseType::Bool || b.type.base == BaseType::Bool)
        throw Error(Errc::TypeMismatch, "'<' cannot compare " +
                                            to_string(a.type) + " and " +
                                            to_string(b.type));
      return {{BaseType::Bool, nullable}};
    }
    default: {  // And
      if (a.type.base != BaseType::Bool || b.type.base != BaseType::Bool)
        throw Error(Errc::TypeMismatch, "'and' needs bool operands, got " +
                                            to_string(a.type) + " and " +
                                            to_string(b.type));
      return {{BaseType::Bool, nullable}};
    }
  }
}

ExprInfo type_expr(const Expr& e, Env& env, bool allow_sum) {
  switch (e.kind) {
    case Expr::Kind::ColRef: {
      Binding& b = env.resolve(e.column);
      return {b.type, b.kind, b.src_table, b.src_column};
    }
    case Expr::Kind::Lit:
      if (!e.lit_type)
        throw Error(Errc::TypeMismatch,
                    "bare null literal needs an enclosing cast");
      return {*e.lit_type};
    case Expr::Kind::Cast: {
      if (e.a->kind == Expr::Kind::Lit && !e.a->lit_type) {
        if (!e.target.nullable)
          throw Error(Errc::TypeMismatch,
                      "cannot cast null to non-nullable " + to_string(e.target));
        return {e.target};
      }
      ExprInfo inner = type_expr(*e.a, env, allow_sum);
      if (!cast_allowed(inner.type, e.target))
        throw Error(Errc::TypeMismatch, "no cast from " +
                                            to_string(inner.type) + " to " +
                                            to_string(e.target));
      ExprInfo out{e.target};
      if (inner.kind != LineageKind::Fresh) {
        out.kind = LineageKind::Cast;
        out.src_table = inner.src_table;
        out.src_column = inner.src_column;
        out.narrowed = is_narrowing(inner.type, e.target);
      }
      return out;
    }
    case Expr::Kind::IsNotNull:
      type_expr(*e.a, env, allow_sum);
      return {{BaseType::Bool, false}};
    case Expr::Kind::SumAgg: {
      if (!allow_sum)
        throw Error(Errc::TypeMismatch,
                    "sum() is only allowed in a group by projection");
      ExprInfo inner = type_expr(*e.a, env, false);
      if (!is_numeric(inner.type.base))
        throw Error(Errc::TypeMismatch,
                    "sum() needs a numeric operand, got " +
                        to_string(inner.type));
      return {{inner.type.base, false}};
    }
    default:
      return type_binary(e, env, allow_sum);
  }
}

Env build_env(const Transform& t,
              const std::map<std::string, SchemaContract>& inputs);

Env env_of_input(const std::string& name,
                 const std::map<std::string, SchemaContract>& inputs) {
  auto it = inputs.find(name);
  if (it == inputs.end())
    throw Error(Errc::UnknownSchema, "no input schema for '" + name + "'");
  Env env;
  for (const auto& col : it->second.columns)
    env.bindings.push_back(
        {{name}, col.name, col.type, LineageKind::Identity, name, col.name});
  return env;
}

Env env_of_join(const Transform& t,
                const std::map<std::string, SchemaContract>& inputs) {
  const std::string& lname = t.child->input;
  const std::string& rname = t.right->input;
  Env left = env_of_input(lname, inputs);
  Env right = env_of_input(rname, inputs);
  std::set<std::string> keys(t.join_keys.begin(), t.join_keys.end());
  Env env;
  for (auto& b : left.bindings) {
    if (keys.count(b.name)) {
      const Binding* rb = nullptr;
      for (const auto& r : right.bindings)
        if (r.name == b.name) rb = &r;
      if (!rb)
        throw Error(Errc::UnknownColumn,
                    "join key '" + b.name + "' missing in " + rname);
      if (rb->type.base != b.type.base)
        throw Error(Errc::TypeMismatch, "join key '" + b.name +
                                            "' has type " + to_string(b.type) +
                                            " vs " + to_string(rb->type));
      // inner-join keys match a concrete value, so they are non-null;
      // JoinKey lineage only when the join is what strips nullability
      env.bindings.push_back(
          {{lname, rname},
           b.name,
           {b.type.base, false},
           b.type.nullable ? LineageKind::JoinKey : LineageKind::Identity,
           lname,
           b.name});
      keys.erase(b.name);
    } else {
      env.bindings.push_back(b);
    }
  }
  if (!keys.empty())
    throw Error(Errc::UnknownColumn,
                "join key '" + *keys.begin() + "' missing in " + lname);
  std::set<std::string> kset(t.join_keys.begin(), t.join_keys.end());
  for (auto& b : right.bindings)
    if (!kset.count(b.name)) env.bindings.push_back(b);
  return env;
}

// Marks columns proven non-null by top-level `x is not null` conjuncts.
void apply_notnull_facts(const Expr& pred, Env& env) {
  if (pred.kind == Expr::Kind::And) {
    apply_notnull_facts(*pred.a, env);
    apply_notnull_facts(*pred.b, env);
    return;
  }
  if (pred.kind == Expr::Kind::IsNotNull &&
      pred.a->kind == Expr::Kind::ColRef) {
    Binding& b = env.resolve(pred.a->column);
    if (b.type.nullable) {
      b.type.nullable = false;
      if (b.kind == LineageKind::Identity) b.kind = LineageKind::NotNull;
    }
  }
}

Env build_env(const Transform& t,
              const std::map<std::string, SchemaContract>& inputs) {
  switch (t.kind) {
    case Transform::Kind::Unit:
      return {};
    case Transform::Kind::Input:
      return env_of_input(t.input, inputs);
    case Transform::Kind::Join:
      return env_of_join(t, inputs);
    case Transform::Kind::Filter: {
      Env env = build_env(*t.child, inputs);
      ExprInfo p = type_expr(*t.predicate, env, false);
      if (p.type.base != BaseType::Bool)
        throw Error(Errc::TypeMismatch,
                    "where predicate must be bool, got " + to_string(p.type));
      apply_notnull_facts(*t.predicate, env);
      return env;
    }
    default:
      throw Error(Errc::SyntaxError, "malformed transform tree");
  }
}

std::string item_name(const ProjItem& item) {
  if (!item.alias.empty()) return item.alias;
  if (item.expr->kind == Expr::Kind::ColRef) {
    const std::string& ref = item.expr->column;
    auto dot = ref.find('.');
    return dot == std::string::npos ? ref : ref.substr(dot + 1);
  }
  throw Error(Errc::SyntaxError, "computed projection needs an alias");
}

OriginKind origin_kind(const ExprInfo& info) {
  switch (info.kind) {
    case LineageKind::Identity: return OriginKind::Inherited;
    case LineageKind::Cast:
      return info.narrowed ? OriginKind::InheritedNarrowed
                           : OriginKind::Inherited;
    case LineageKind::NotNull:
    case LineageKind::JoinKey: return OriginKind::InheritedNotNull;
    default: return OriginKind::Fresh;
  }
}

void emit(Inference& out, const std::string& name, ExprInfo info) {
  if (out.schema.find(name))
    throw Error(Errc::TypeMismatch, "duplicate output column '" + name + "'");
  // a cast that also renames introduces a new column rather than tracking
  // the old one; same-name casts keep their lineage
  if (info.kind == LineageKind::Cast && name != info.src_column)
    info = ExprInfo{info.type};
  ColumnOrigin origin{origin_kind(info), info.src_table, info.src_column};
  out.schema.columns.push_back({name, info.type, origin});
  out.steps.push_back({name, info.kind, info.src_table, info.src_column});
}

}  // namespace

Inference infer_schema(const Transform& t,
                       const std::map<std::string, SchemaContract>& inputs) {
  Inference out;
  if (t.kind == Transform::Kind::Select) {
    Env env = build_env(*t.child, inputs);
    for (const auto& item : t.items)
      emit(out, item_name(item), type_expr(*item.expr, env, false));
    return out;
  }
  if (t.kind != Transform::Kind::Aggregate)
    throw Error(Errc::SyntaxError, "malformed transform tree");

  Env env = build_env(*t.child, inputs);
  std::set<std::string> group_keys;
  for (const auto& g : t.group_by) {
    env.resolve(g);
    group_keys.insert(g);
  }
  for (const auto& item : t.items) {
    std::string name = item_name(item);
    if (item.expr->kind == Expr::Kind::ColRef) {
      if (!group_keys.count(item.expr->column))
        throw Error(Errc::TypeMismatch, "column '" + item.expr->column +
                                            "' is neither grouped nor summed");
      emit(out, name, type_expr(*item.expr, env, false));
    } else {
      if (item.expr->kind != Expr::Kind::SumAgg)
        throw Error(Errc::TypeMismatch,
                    "group by projection must be a key or sum()");
      emit(out, name, type_expr(*item.expr, env, true));
    }
  }
  return out;
}

}  // namespace lakekit::lang
