#include "lakekit/ast.hpp"

namespace lakekit::lang {

namespace {

ExprPtr make(Expr e) { return std::make_shared<Expr>(std::move(e)); }

TransformPtr make(Transform t) { return std::make_shared<Transform>(std::move(t)); }

}  // namespace

ExprPtr Expr::col(std::string name) {
  Expr e{Kind::ColRef};
  e.column = std::move(name);
  return make(std::move(e));
}

ExprPtr Expr::lit(Value v, ColumnType t) {
  Expr e{Kind::Lit};
  e.value = std::move(v);
  e.lit_type = t;
  return make(std::move(e));
}

ExprPtr Expr::null_lit() {
  Expr e{Kind::Lit};
  return make(std::move(e));
}

ExprPtr Expr::cast(ExprPtr x, ColumnType target) {
  Expr e{Kind::Cast};
  e.a = std::move(x);
  e.target = target;
  return make(std::move(e));
}

ExprPtr Expr::is_not_null(ExprPtr x) {
  Expr e{Kind::IsNotNull};
  e.a = std::move(x);
  return make(std::move(e));
}

ExprPtr Expr::sub(ExprPtr a, ExprPtr b) {
  Expr e{Kind::Sub};
  e.a = std::move(a);
  e.b = std::move(b);
  return make(std::move(e));
}

ExprPtr Expr::lt(ExprPtr a, ExprPtr b) {
  Expr e{Kind::Lt};
  e.a = std::move(a);
  e.b = std::move(b);
  return make(std::move(e));
}

ExprPtr Expr::logical_and(ExprPtr a, ExprPtr b) {
  Expr e{Kind::And};
  e.a = std::move(a);
  e.b = std::move(b);
  return make(std::move(e));
}

ExprPtr Expr::sum(ExprPtr x) {
  Expr e{Kind::SumAgg};
  e.a = std::move(x);
  return make(std::move(e));
}

TransformPtr Transform::input_ref(std::string name) {
  Transform t{Kind::Input};
  t.input = std::move(name);
  return make(std::move(t));
}

TransformPtr Transform::unit() { return make(Transform{Kind::Unit}); }

TransformPtr Transform::select(TransformPtr child, std::vector<ProjItem> items) {
  Transform t{Kind::Select};
  t.child = std::move(child);
  t.items = std::move(items);
  return make(std::move(t));
}

TransformPtr Transform::filter(TransformPtr child, ExprPtr predicate) {
  Transform t{Kind::Filter};
  t.child = std::move(child);
  t.predicate = std::move(predicate);
  return make(std::move(t));
}

TransformPtr Transform::join(TransformPtr left, TransformPtr right,
                             std::vector<std::string> keys) {
  Transform t{Kind::Join};
  t.child = std::move(left);
  t.right = std::move(right);
  t.join_keys = std::move(keys);
  return make(std::move(t));
}

TransformPtr Transform::aggregate(TransformPtr child,
                                  std::vector<std::string> group_by,
                                  std::vector<ProjItem> items) {
  Transform t{Kind::Aggregate};
  t.child = std::move(child);
  t.group_by = std::move(group_by);
  t.items = std::move(items);
  return make(std::move(t));
}

bool equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  auto sub_equal = [](const ExprPtr& x, const ExprPtr& y) {
    if (!x || !y) return !x && !y;
    return equal(*x, *y);
  };
  switch (a.kind) {
    case Expr::Kind::ColRef:
      return a.column == b.column;
    case Expr::Kind::Lit:
      return a.lit_type == b.lit_type && a.value == b.value;
    case Expr::Kind::Cast:
      return a.target == b.target && sub_equal(a.a, b.a);
    case Expr::Kind::IsNotNull:
    case Expr::Kind::SumAgg:
      return sub_equal(a.a, b.a);
    case Expr::Kind::Sub:
    case Expr::Kind::Lt:
    case Expr::Kind::And:
      return sub_equal(a.a, b.a) && sub_equal(a.b, b.b);
  }
  return false;
}

bool equal(const Transform& a, const Transform& b) {
  if (a.kind != b.kind) return false;
  auto sub_equal = [](const TransformPtr& x, const TransformPtr& y) {
    if (!x || !y) return !x && !y;
    return equal(*x, *y);
  };
  auto items_equal = [](const std::vector<ProjItem>& x,
                        const std::vector<ProjItem>& y) {
    if (x.size() != y.size()) return false;
    for (size_t i = 0; i < x.size(); ++i)
      if (x[i].alias != y[i].alias || !equal(*x[i].expr, *y[i].expr))
        return false;
    return true;
  };
  switch (a.kind) {
    case Transform::Kind::Input:
      return a.input == b.input;
    case Transform::Kind::Unit:
      return true;
    case Transform::Kind::Select:
      return sub_equal(a.child, b.child) && items_equal(a.items, b.items);
    case Transform::Kind::Filter:
      return sub_equal(a.child, b.child) && equal(*a.predicate, *b.predicate);
    case Transform::Kind::Join:
      return sub_equal(a.child, b.child) && sub_equal(a.right, b.right) &&
             a.join_keys == b.join_keys;
    case Transform::Kind::Aggregate:
      return sub_equal(a.child, b.child) && a.group_by == b.group_by &&
             items_equal(a.items, b.items);
  }
  return false;
}

namespace {

void collect_inputs(const Transform& t, std::vector<std::string>& out) {
  switch (t.kind) {
    case Transform::Kind::Input:
      out.push_back(t.input);
      return;
    case Transform::Kind::Unit:
      return;
    default:
      if (t.child) collect_inputs(*t.child, out);
      if (t.right) collect_inputs(*t.right, out);
  }
}

}  // namespace

std::vector<std::string> input_names(const Transform& t) {
  std::vector<std::string> out;
  collect_inputs(t, out);
  return out;
}

}  // namespace lakekit::lang
