#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lakekit/value.hpp"

namespace lakekit::lang {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Expression nodes of the closed transformation language.
struct Expr {
  enum class Kind { ColRef, Lit, Cast, IsNotNull, Sub, Lt, And, SumAgg };
  Kind kind;

  std::string column;                   // ColRef; may be "input.col" qualified
  Value value;                          // Lit
  std::optional<ColumnType> lit_type;   // Lit; empty for the bare null literal
  ColumnType target;                    // Cast
  ExprPtr a, b;

  static ExprPtr col(std::string name);
  static ExprPtr lit(Value v, ColumnType t);
  static ExprPtr null_lit();
  static ExprPtr cast(ExprPtr e, ColumnType target);
  static ExprPtr is_not_null(ExprPtr e);
  static ExprPtr sub(ExprPtr a, ExprPtr b);
  static ExprPtr lt(ExprPtr a, ExprPtr b);
  static ExprPtr logical_and(ExprPtr a, ExprPtr b);
  static ExprPtr sum(ExprPtr e);
};

struct ProjItem {
  ExprPtr expr;
  std::string alias;  // empty when the projected column keeps its own name
};

struct Transform;
using TransformPtr = std::shared_ptr<const Transform>;

/// A single-statement pipeline node. Statements compose a fixed shape:
/// Select/Aggregate over an optional Filter over a Join/Input/Unit base.
struct Transform {
  enum class Kind { Input, Unit, Select, Filter, Join, Aggregate };
  Kind kind;

  std::string input;                 // Input: upstream node or source table
  TransformPtr child, right;         // right only for Join
  std::vector<ProjItem> items;       // Select / Aggregate projection
  ExprPtr predicate;                 // Filter
  std::vector<std::string> join_keys;
  std::vector<std::string> group_by;

  static TransformPtr input_ref(std::string name);
  static TransformPtr unit();
  static TransformPtr select(TransformPtr child, std::vector<ProjItem> items);
  static TransformPtr filter(TransformPtr child, ExprPtr predicate);
  static TransformPtr join(TransformPtr left, TransformPtr right,
                           std::vector<std::string> keys);
  static TransformPtr aggregate(TransformPtr child,
                                std::vector<std::string> group_by,
                                std::vector<ProjItem> items);
};

bool equal(const Expr& a, const Expr& b);
bool equal(const Transform& a, const Transform& b);

/// Upstream tables referenced by the transform, in reference order.
std::vector<std::string> input_names(const Transform& t);

}  // namespace lakekit::lang
