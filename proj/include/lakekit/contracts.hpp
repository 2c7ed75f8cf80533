#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "lakekit/ast.hpp"
#include "lakekit/infer.hpp"
#include "lakekit/schema.hpp"

namespace lakekit {

struct Span {
  std::string file;
  int line = 0, col = 0;
};

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string code;  // stable machine name, e.g. "IllegalNarrowing"
  std::string node;
  std::string message;
  std::optional<Span> span;

  std::string to_line() const;  // "severity code node message file:line:col"
};

bool has_errors(const std::vector<Diagnostic>& diags);

struct NodeContract {
  std::string name;                 // table the node produces
  std::vector<std::string> inputs;  // source tables or earlier nodes
  SchemaContract declared_output;
  lang::TransformPtr transform;
  std::string statement_text;  // verbatim manifest text, for change detection
  int header_line = 0;
};

struct PipelinePlan {
  std::vector<NodeContract> nodes;  // topologically ordered
  std::map<std::string, SchemaContract> sources;
  std::map<std::string, SchemaContract> schemas;  // declared, by schema name
  std::string file;

  const NodeContract* find_node(const std::string& name) const;
  bool is_source(const std::string& table) const;
};

/// Parses a pipeline manifest. Throws ManifestParseError, CycleDetected,
/// UnknownSchema. Node order in the result is topological, ties broken by
/// declaration order.
PipelinePlan load_manifest(const std::string& path);
PipelinePlan parse_manifest(const std::string& text, const std::string& file);

/// Control-plane composition check. Touches no data; all findings are
/// returned, never thrown. Empty result means the plan is safe to run
/// against lakes whose sources match `lake_schemas`.
std::vector<Diagnostic> check_plan(
    const PipelinePlan& plan,
    const std::map<std::string, SchemaContract>& lake_schemas);

struct LineageNode {
  std::string table;
  std::string column;
  lang::LineageKind kind = lang::LineageKind::Identity;
  std::vector<LineageNode> children;  // empty for sources and fresh columns
};

/// Column provenance back to the sources. Throws UnknownColumn.
LineageNode lineage(const PipelinePlan& plan, const std::string& node,
                    const std::string& column);

/// (node, column, "notnull") checks that are provably redundant at runtime
/// because a validated upstream contract already guarantees them.
/// Requires check_plan(plan, plan.sources) to be error-free.
std::set<std::tuple<std::string, std::string, std::string>>
plan_validation_skips(const PipelinePlan& plan);

}  // namespace lakekit
