#pragma once

#include <map>
#include <string>
#include <vector>

#include "lakekit/ast.hpp"
#include "lakekit/schema.hpp"

namespace lakekit::lang {

/// How an output column relates to the inputs. Drives both contract
/// checking and redundant-validation planning.
enum class LineageKind {
  Identity,   // column passed through unchanged
  Cast,       // explicit cast of a single upstream column
  NotNull,    // upstream column with nullability stripped by a filter or join
  JoinKey,    // equi-join key (also non-null in the output)
  Fresh       // computed; no single upstream column
};

struct LineageStep {
  std::string column;        // output column name
  LineageKind kind;
  std::string source_table;  // empty for Fresh
  std::string source_column; // empty for Fresh
};

struct Inference {
  SchemaContract schema;
  std::vector<LineageStep> steps;  // one per output column
};

/// Infers the output schema of a transform given its input schemas.
/// Throws Error with UnknownColumn / TypeMismatch / IllegalNarrowing /
/// AmbiguousColumn on ill-typed programs.
Inference infer_schema(const Transform& t,
                       const std::map<std::string, SchemaContract>& inputs);

}  // namespace lakekit::lang
