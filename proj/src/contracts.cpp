#include "lakekit/contracts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>

#include "lakekit/errors.hpp"
#include "lakekit/parser.hpp"

namespace lakekit {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_manifest(const std::string& file, int line,
                               const std::string& what) {
  std::ostringstream out;
  out << file << ":" << line << ": " << what;
  throw Error(Errc::ManifestParseError, out.str());
}

bool valid_ident(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_')
    return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// `col: type [nullable] [from Schema.col] [notnull]`
ColumnContract parse_column_line(const std::string& file, int lineno,
                                 const std::string& text) {
  auto colon = text.find(':');
  if (colon == std::string::npos) bad_manifest(file, lineno, "expected 'col: type'");
  ColumnContract col;
  col.name = trim(text.substr(0, colon));
  if (!valid_ident(col.name)) bad_manifest(file, lineno, "bad column name");

  std::istringstream rest(text.substr(colon + 1));
  std::string word;
  if (!(rest >> word)) bad_manifest(file, lineno, "missing column type");
  try {
    col.type = parse_column_type(word);
  } catch (const Error&) {
    bad_manifest(file, lineno, "unknown type '" + word + "'");
  }
  bool notnull = false;
  while (rest >> word) {
    if (word == "nullable") {
      col.type.nullable = true;
    } else if (word == "notnull") {
      notnull = true;
    } else if (word == "from") {
      std::string ref;
      if (!(rest >> ref)) bad_manifest(file, lineno, "'from' needs Schema.col");
      auto dot = ref.find('.');
      if (dot == std::string::npos)
        bad_manifest(file, lineno, "'from' needs Schema.col");
      col.origin.schema = ref.substr(0, dot);
      col.origin.column = ref.substr(dot + 1);
      col.origin.kind = OriginKind::Inherited;
    } else {
      bad_manifest(file, lineno, "unexpected token '" + word + "'");
    }
  }
  if (notnull) {
    if (col.origin.schema.empty())
      bad_manifest(file, lineno, "'notnull' needs a 'from' origin");
    col.origin.kind = OriginKind::InheritedNotNull;
    col.type.nullable = false;
  }
  return col;
}

// `-- <node>: <Schema> <- <input1>[, <input2>]`
bool parse_header(const std::string& text, NodeContract& node,
                  std::string& schema_name) {
  if (text.rfind("--", 0) != 0) return false;
  std::string body = trim(text.substr(2));
  auto colon = body.find(':');
  auto arrow = body.find("<-");
  if (colon == std::string::npos || arrow == std::string::npos ||
      arrow < colon)
    return false;
  node = NodeContract{};
  node.name = trim(body.substr(0, colon));
  schema_name = trim(body.substr(colon + 1, arrow - colon - 1));
  std::string inputs = body.substr(arrow + 2);
  std::istringstream in(inputs);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) node.inputs.push_back(part);
  }
  return valid_ident(node.name) && valid_ident(schema_name) &&
         !node.inputs.empty();
}

void resolve_origins(PipelinePlan& plan) {
  for (auto& [name, schema] : plan.schemas) {
    for (auto& col : schema.columns) {
      if (col.origin.schema.empty()) continue;
      auto it = plan.schemas.find(col.origin.schema);
      if (it == plan.schemas.end())
        throw Error(Errc::UnknownSchema,
                    name + "." + col.name + " inherits from unknown schema " +
                        col.origin.schema);
      const ColumnContract* up = it->second.find(col.origin.column);
      if (!up)
        throw Error(Errc::ManifestParseError,
                    name + "." + col.name + " inherits from missing column " +
                        col.origin.schema + "." + col.origin.column);
      if (col.origin.kind == OriginKind::Inherited &&
          is_narrowing(up->type, col.type))
        col.origin.kind = OriginKind::InheritedNarrowed;
    }
  }
}

void topo_sort(PipelinePlan& plan) {
  std::map<std::string, const NodeContract*> by_name;
  for (const auto& n : plan.nodes) by_name[n.name] = &n;

  std::vector<NodeContract> ordered;
  std::set<std::string> done, visiting;
  // declaration order drives both tie-breaking and cycle reporting
  std::function<void(const NodeContract&)> visit = [&](const NodeContract& n) {
    if (done.count(n.name)) return;
    if (visiting.count(n.name)) {
      std::string cyc;
      for (const auto& m : visiting) cyc += (cyc.empty() ? "" : ", ") + m;
      throw Error(Errc::CycleDetected, "cycle through: " + cyc);
    }
    visiting.insert(n.name);
    for (const auto& in : n.inputs) {
      if (plan.sources.count(in)) continue;
      auto it = by_name.find(in);
      if (it == by_name.end())
        throw Error(Errc::ManifestParseError,
                    "node " + n.name + " reads unknown table " + in);
      visit(*it->second);
    }
    visiting.erase(n.name);
    done.insert(n.name);
    ordered.push_back(n);
  };
  for (const auto& n : plan.nodes) visit(n);
  plan.nodes = std::move(ordered);
}

}  // namespace

std::string Diagnostic::to_line() const {
  std::ostringstream out;
  out << (severity == Severity::Error ? "error" : "warning") << " " << code
      << " " << node << " " << message;
  if (span) out << " " << span->file << ":" << span->line << ":" << span->col;
  return out.str();
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) {
    return d.severity == Diagnostic::Severity::Error;
  });
}

const NodeContract* PipelinePlan::find_node(const std::string& name) const {
  for (const auto& n : nodes)
    if (n.name == name) return &n;
  return nullptr;
}

bool PipelinePlan::is_source(const std::string& table) const {
  return sources.count(table) != 0;
}

PipelinePlan parse_manifest(const std::string& text, const std::string& file) {
  PipelinePlan plan;
  plan.file = file;

  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
  }

  std::map<std::string, std::string> node_schema;  // node -> declared schema
  size_t i = 0;
  auto lineno = [&] { return static_cast<int>(i) + 1; };
  while (i < lines.size()) {
    std::string line = trim(lines[i]);
    if (line.empty()) {
      ++i;
      continue;
    }
    if (line.rfind("schema ", 0) == 0) {
      auto brace = line.find('{');
      if (brace == std::string::npos)
        bad_manifest(file, lineno(), "expected 'schema Name {'");
      std::string name = trim(line.substr(7, brace - 7));
      if (!valid_ident(name))
        bad_manifest(file, lineno(), "expected 'schema Name {'");
      if (plan.schemas.count(name))
        bad_manifest(file, lineno(), "duplicate schema " + name);
      SchemaContract schema;
      schema.name = name;
      auto add_column = [&](const std::string& body) {
        ColumnContract col = parse_column_line(file, lineno(), body);
        if (schema.find(col.name))
          bad_manifest(file, lineno(), "duplicate column " + col.name);
        schema.columns.push_back(std::move(col));
      };
      std::string inline_body = trim(line.substr(brace + 1));
      if (!inline_body.empty()) {
        // one-line form: `schema Name { a: int64; b: string }`
        if (inline_body.back() != '}')
          bad_manifest(file, lineno(), "unterminated schema");
        inline_body.pop_back();
        std::istringstream cols(inline_body);
        std::string part;
        while (std::getline(cols, part, ';'))
          if (!trim(part).empty()) add_column(trim(part));
      } else {
        ++i;
        for (;; ++i) {
          if (i >= lines.size())
            bad_manifest(file, lineno(), "unterminated schema");
          std::string body = trim(lines[i]);
          if (body == "}") break;
          if (body.empty() || body.rfind("--", 0) == 0) continue;
          add_column(body);
        }
      }
      if (schema.columns.empty())
        bad_manifest(file, lineno(), "schema " + name + " has no columns");
      plan.schemas[name] = std::move(schema);
      ++i;
      continue;
    }
    if (line.rfind("source ", 0) == 0) {
      // `source table: Schema`
      auto colon = line.find(':');
      if (colon == std::string::npos)
        bad_manifest(file, lineno(), "expected 'source table: Schema'");
      std::string table = trim(line.substr(7, colon - 7));
      std::string schema = trim(line.substr(colon + 1));
      if (!valid_ident(table) || !valid_ident(schema))
        bad_manifest(file, lineno(), "expected 'source table: Schema'");
      auto it = plan.schemas.find(schema);
      if (it == plan.schemas.end())
        throw Error(Errc::UnknownSchema, "source " + table +
                                             " uses undeclared schema " +
                                             schema);
      if (plan.sources.count(table))
        bad_manifest(file, lineno(), "duplicate source " + table);
      plan.sources[table] = it->second;
      ++i;
      continue;
    }
    NodeContract node;
    std::string schema_name;
    if (parse_header(line, node, schema_name)) {
      node.header_line = lineno();
      if (node_schema.count(node.name))
        bad_manifest(file, lineno(), "duplicate node " + node.name);
      auto it = plan.schemas.find(schema_name);
      if (it == plan.schemas.end())
        throw Error(Errc::UnknownSchema, "node " + node.name +
                                             " declares unknown schema " +
                                             schema_name);
      node.declared_output = it->second;
      ++i;
      std::string stmt;
      while (i < lines.size()) {
        std::string next = trim(lines[i]);
        NodeContract probe;
        std::string probe_schema;
        if (parse_header(next, probe, probe_schema) ||
            next.rfind("schema ", 0) == 0 || next.rfind("source ", 0) == 0)
          break;
        stmt += lines[i] + "\n";
        ++i;
      }
      node.statement_text = trim(stmt);
      if (node.statement_text.empty())
        bad_manifest(file, node.header_line,
                     "node " + node.name + " has no statement");
      try {
        node.transform = lang::parse(node.statement_text);
      } catch (const Error& e) {
        bad_manifest(file, node.header_line,
                     "node " + node.name + ": " + e.message());
      }
      node_schema[node.name] = schema_name;
      plan.nodes.push_back(std::move(node));
      continue;
    }
    bad_manifest(file, lineno(), "unrecognized line: " + line);
  }

  if (plan.nodes.empty())
    throw Error(Errc::ManifestParseError, file + ": manifest declares no nodes");
  resolve_origins(plan);
  // origin resolution may have upgraded kinds; re-sync the node copies
  for (auto& n : plan.nodes) n.declared_output = plan.schemas.at(node_schema[n.name]);

  // statement inputs must match the header's declared inputs
  for (const auto& n : plan.nodes) {
    std::vector<std::string> used = lang::input_names(*n.transform);
    for (const auto& u : used)
      if (std::find(n.inputs.begin(), n.inputs.end(), u) == n.inputs.end())
        bad_manifest(file, n.header_line,
                     "node " + n.name + " reads " + u +
                         " which its header does not declare");
  }
  topo_sort(plan);
  return plan;
}

PipelinePlan load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(Errc::ManifestParseError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path);
}

namespace {

Diagnostic error_diag(const std::string& code, const std::string& node,
                      const std::string& message, const PipelinePlan& plan,
                      int line = 0) {
  Diagnostic d;
  d.code = code;
  d.node = node;
  d.message = message;
  if (line) d.span = Span{plan.file, line, 1};
  return d;
}

}  // namespace

std::vector<Diagnostic> check_plan(
    const PipelinePlan& plan,
    const std::map<std::string, SchemaContract>& lake_schemas) {
  std::vector<Diagnostic> out;

  // Source drift first: the lake is the truth inference runs against.
  std::map<std::string, SchemaContract> env;
  for (const auto& [table, declared] : plan.sources) {
    auto it = lake_schemas.find(table);
    if (it == lake_schemas.end()) {
      out.push_back(error_diag("MissingSource", table,
                               "source table not present in the lake", plan));
      env[table] = declared;
      continue;
    }
    env[table] = it->second;
    env[table].name = declared.name;
    if (!it->second.same_shape(declared)) {
      out.push_back(error_diag(
          "TypeMismatch", table,
          "lake schema for source drifted from the manifest declaration",
          plan));
    }
  }

  for (const auto& node : plan.nodes) {
    lang::Inference inf;
    try {
      inf = lang::infer_schema(*node.transform, env);
    } catch (const Error& e) {
      out.push_back(error_diag(errc_name(e.code()), node.name, e.message(),
                               plan, node.header_line));
      env[node.name] = node.declared_output;
      continue;
    }

    const SchemaContract& declared = node.declared_output;
    for (size_t c = 0; c < inf.schema.columns.size(); ++c) {
      const ColumnContract& got = inf.schema.columns[c];
      const ColumnContract* want = declared.find(got.name);
      if (!want) {
        out.push_back(error_diag(
            "ExtraColumn", node.name,
            "produces column '" + got.name + "' the contract does not declare",
            plan, node.header_line));
        continue;
      }
      if (got.type == want->type || is_widening(got.type, want->type))
        continue;
      std::string detail = "column '" + got.name + "' is " +
                           to_string(got.type) + " but the contract says " +
                           to_string(want->type);
      // Narrowing of an inherited column is fixable with a cast; anything
      // else is a plain contract mismatch.
      bool inherited = inf.steps[c].kind != lang::LineageKind::Fresh;
      if (inherited && is_narrowing(got.type, want->type))
        out.push_back(error_diag("IllegalNarrowing", node.name,
                                 detail + " (add an explicit cast)", plan,
                                 node.header_line));
      else
        out.push_back(error_diag("TypeMismatch", node.name, detail, plan,
                                 node.header_line));
    }
    for (const auto& want : declared.columns)
      if (!inf.schema.find(want.name))
        out.push_back(error_diag(
            "MissingColumn", node.name,
            "contract declares column '" + want.name + "' the node never produces",
            plan, node.header_line));

    // Origin annotations, when present, must agree with inference.
    for (const auto& want : declared.columns) {
      if (want.origin.schema.empty()) continue;
      const ColumnContract* got = inf.schema.find(want.name);
      if (!got || got->origin.column.empty()) continue;
      // declared origins name schemas, inferred ones name tables; compare
      // the column leg plus the origin kind
      if (got->origin.column != want.origin.column ||
          got->origin.kind != want.origin.kind)
        out.push_back(error_diag(
            "OriginMismatch", node.name,
            "column '" + want.name + "' declares origin " +
                origin_kind_name(want.origin.kind) + " of " +
                want.origin.schema + "." + want.origin.column +
                " but inference found " + origin_kind_name(got->origin.kind) +
                (got->origin.column.empty()
                     ? ""
                     : " of " + got->origin.schema + "." + got->origin.column),
            plan, node.header_line));
    }

    env[node.name] = declared;  // downstream sees the contract, not the truth
  }
  return out;
}

namespace {

// Lineage steps per node, computed against declared upstream contracts.
std::map<std::string, lang::Inference> infer_all(const PipelinePlan& plan) {
  std::map<std::string, SchemaContract> env = plan.sources;
  std::map<std::string, lang::Inference> out;
  for (const auto& node : plan.nodes) {
    out[node.name] = lang::infer_schema(*node.transform, env);
    env[node.name] = node.declared_output;
  }
  return out;
}

LineageNode walk_lineage(const PipelinePlan& plan,
                         const std::map<std::string, lang::Inference>& inf,
                         const std::string& table, const std::string& column) {
  LineageNode out{table, column};
  if (plan.is_source(table)) {
    if (!plan.sources.at(table).find(column))
      throw Error(Errc::UnknownColumn, table + " has no column " + column);
    return out;
  }
  auto it = inf.find(table);
  if (it == inf.end())
    throw Error(Errc::UnknownColumn, "no node or source named " + table);
  const lang::Inference& node_inf = it->second;
  for (size_t c = 0; c < node_inf.steps.size(); ++c) {
    if (node_inf.steps[c].column != column) continue;
    out.kind = node_inf.steps[c].kind;
    if (out.kind != lang::LineageKind::Fresh)
      out.children.push_back(walk_lineage(plan, inf,
                                          node_inf.steps[c].source_table,
                                          node_inf.steps[c].source_column));
    return out;
  }
  throw Error(Errc::UnknownColumn, table + " has no column " + column);
}

}  // namespace

LineageNode lineage(const PipelinePlan& plan, const std::string& node,
                    const std::string& column) {
  return walk_lineage(plan, infer_all(plan), node, column);
}

std::set<std::tuple<std::string, std::string, std::string>>
plan_validation_skips(const PipelinePlan& plan) {
  std::set<std::tuple<std::string, std::string, std::string>> out;
  std::map<std::string, lang::Inference> inf = infer_all(plan);
  for (const auto& node : plan.nodes) {
    const lang::Inference& ni = inf.at(node.name);
    for (size_t c = 0; c < ni.steps.size(); ++c) {
      const lang::LineageStep& step = ni.steps[c];
      // Only moves that provably preserve an upstream non-null guarantee;
      // the upstream must itself be a validated node output.
      if (step.kind != lang::LineageKind::Identity &&
          step.kind != lang::LineageKind::JoinKey)
        continue;
      const NodeContract* up = plan.find_node(step.source_table);
      if (!up) continue;  // sources are not re-validated by the runner
      const ColumnContract* upcol = up->declared_output.find(step.source_column);
      if (!upcol || upcol->type.nullable) continue;
      const ColumnContract* declared =
          node.declared_output.find(ni.steps[c].column);
      if (!declared || declared->type.nullable) continue;
      out.insert({node.name, step.column, "notnull"});
    }
  }
  return out;
}

}  // namespace lakekit
