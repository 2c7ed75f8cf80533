#include <doctest.h>

#include <random>

#include "lakekit/conformance.hpp"
#include "lakekit/contracts.hpp"
#include "lakekit/errors.hpp"
#include "lakekit/eval.hpp"
#include "lakekit/parser.hpp"

using namespace lakekit;

namespace {

const std::string kPipeline = std::string(LAKEKIT_TEST_DATA) + "/pipeline.manifest";
const std::string kFamily = std::string(LAKEKIT_TEST_DATA) + "/family.manifest";

std::vector<std::string> node_names(const PipelinePlan& p) {
  std::vector<std::string> out;
  for (const auto& n : p.nodes) out.push_back(n.name);
  return out;
}

int count_code(const std::vector<Diagnostic>& ds, const std::string& code,
               const std::string& node = "") {
  int n = 0;
  for (const auto& d : ds)
    if (d.code == code && (node.empty() || d.node == node)) ++n;
  return n;
}

}  // namespace

TEST_CASE("three-node manifest loads in topological order") {
  PipelinePlan plan = load_manifest(kPipeline);
  CHECK(node_names(plan) == std::vector<std::string>(
                                {"parent_table", "child_table", "grand_child"}));
  CHECK(plan.sources.count("raw_table") == 1);
  CHECK(plan.schemas.at("GrandSchema").columns[1].origin.kind ==
        OriginKind::InheritedNarrowed);  // float64 -> int64 deduced
  const NodeContract* child = plan.find_node("child_table");
  REQUIRE(child != nullptr);
  CHECK(child->inputs == std::vector<std::string>{"parent_table"});
  CHECK(child->statement_text.find("cast(_S as float64)") != std::string::npos);
}

TEST_CASE("four-node appendix manifest loads") {
  PipelinePlan plan = load_manifest(kFamily);
  REQUIRE(plan.nodes.size() == 4);
  CHECK(plan.nodes[3].name == "family_friend");
  CHECK(plan.nodes[3].inputs ==
        std::vector<std::string>({"child_table", "grand_child"}));
  CHECK(plan.schemas.at("FriendSchema").columns[2].origin.kind ==
        OriginKind::InheritedNotNull);
}

TEST_CASE("declaration order is the tie-break, dependencies still win") {
  // child declared before parent; topo order must flip them
  PipelinePlan plan = parse_manifest(
      "schema S { a: int64 }\n"
      "source src: S\n"
      "-- child: S <- parent\n"
      "select a from parent\n"
      "-- parent: S <- src\n"
      "select a from src\n",
      "inline");
  CHECK(node_names(plan) == std::vector<std::string>({"parent", "child"}));
}

TEST_CASE("manifest error cases") {
  auto parse_err = [](const std::string& text) {
    try {
      parse_manifest(text, "inline");
      FAIL("should throw");
      return Errc::IoError;
    } catch (const Error& e) {
      return e.code();
    }
  };
  CHECK(parse_err("schema S { a: int64 }\n"
                  "source src: S\n"
                  "-- a: S <- a\n"
                  "select a from a\n") == Errc::CycleDetected);
  CHECK(parse_err("schema S { a: int64 }\n"
                  "-- n: Missing <- src\n"
                  "select a from src\n") == Errc::UnknownSchema);
  CHECK(parse_err("schema S { a: int64 }\n"
                  "source src: Nope\n"
                  "-- n: S <- src\n"
                  "select a from src\n") == Errc::UnknownSchema);
  CHECK(parse_err("") == Errc::ManifestParseError);
  CHECK(parse_err("schema S { a: int64 }\n") == Errc::ManifestParseError);
  CHECK(parse_err("schema S { a: wat }\n"
                  "source src: S\n"
                  "-- n: S <- src\nselect a from src\n") ==
        Errc::ManifestParseError);
  CHECK(parse_err("schema S { a: int64 from Nope.a }\n"
                  "source src: S\n"
                  "-- n: S <- src\nselect a from src\n") ==
        Errc::UnknownSchema);
  CHECK(parse_err("schema S { a: int64 }\n"
                  "source src: S\n"
                  "-- n: S <- src\n"
                  "select a frm src\n") == Errc::ManifestParseError);
  // statement reading a table the header does not declare
  CHECK(parse_err("schema S { a: int64 }\n"
                  "source src: S\n"
                  "source other: S\n"
                  "-- n: S <- src\n"
                  "select a from other\n") == Errc::ManifestParseError);
}

TEST_CASE("unmodified pipeline checks clean against matching lake") {
  PipelinePlan plan = load_manifest(kFamily);
  std::vector<Diagnostic> ds = check_plan(plan, plan.sources);
  for (const auto& d : ds) CAPTURE(d.to_line());
  CHECK(ds.empty());
}

TEST_CASE("source drift to float64 fails the parent contract") {
  PipelinePlan plan = load_manifest(kPipeline);
  auto lake = plan.sources;
  lake["raw_table"].columns[2].type = {BaseType::Float64, false};
  std::vector<Diagnostic> ds = check_plan(plan, lake);
  CHECK(has_errors(ds));
  // drift itself plus the broken _S: int64 contract downstream
  CHECK(count_code(ds, "TypeMismatch", "raw_table") == 1);
  CHECK(count_code(ds, "TypeMismatch", "parent_table") == 1);
  // but only the directly affected node fails
  CHECK(count_code(ds, "TypeMismatch", "child_table") == 0);
}

TEST_CASE("narrowing without an explicit cast is IllegalNarrowing") {
  PipelinePlan plan = load_manifest(kPipeline);
  for (auto& n : plan.nodes)
    if (n.name == "grand_child")
      n.transform = lang::parse("select col2, col4 from child_table");
  std::vector<Diagnostic> ds = check_plan(plan, plan.sources);
  REQUIRE(count_code(ds, "IllegalNarrowing", "grand_child") == 1);
  for (const auto& d : ds)
    if (d.code == "IllegalNarrowing") {
      CHECK(d.message.find("col4") != std::string::npos);
      CHECK(d.message.find("float64") != std::string::npos);
      CHECK(d.message.find("int64") != std::string::npos);
    }
}

TEST_CASE("extra, missing and origin diagnostics") {
  PipelinePlan plan = load_manifest(kPipeline);
  SUBCASE("extra column") {
    for (auto& n : plan.nodes)
      if (n.name == "grand_child")
        n.transform = lang::parse(
            "select col2, cast(col4 as int64) as col4, col5 from child_table");
    auto ds = check_plan(plan, plan.sources);
    CHECK(count_code(ds, "ExtraColumn", "grand_child") == 1);
  }
  SUBCASE("missing column") {
    for (auto& n : plan.nodes)
      if (n.name == "grand_child")
        n.transform = lang::parse("select col2 from child_table");
    auto ds = check_plan(plan, plan.sources);
    CHECK(count_code(ds, "MissingColumn", "grand_child") == 1);
  }
  SUBCASE("unknown column keeps checking downstream") {
    for (auto& n : plan.nodes)
      if (n.name == "parent_table")
        n.transform = lang::parse(
            "select col1, col2, sum(nope) as _S from raw_table "
            "group by col1, col2");
    auto ds = check_plan(plan, plan.sources);
    CHECK(count_code(ds, "UnknownColumn", "parent_table") == 1);
    // downstream nodes check against parent's declared contract
    CHECK(count_code(ds, "TypeMismatch") == 0);
  }
  SUBCASE("origin annotation disagreement") {
    // claim col2 comes from col1
    plan.nodes[1].declared_output.columns[0].origin.column = "col1";
    auto ds = check_plan(plan, plan.sources);
    CHECK(count_code(ds, "OriginMismatch", "child_table") == 1);
  }
  SUBCASE("missing source in the lake") {
    auto ds = check_plan(plan, {});
    CHECK(count_code(ds, "MissingSource", "raw_table") == 1);
  }
}

TEST_CASE("validate_data conformance reports") {
  SchemaContract s;
  s.name = "ChildSchema";
  s.columns = {{"col4", {BaseType::Float64, false}, {}},
               {"col5", {BaseType::String, true}, {}}};

  SUBCASE("nullable column tolerates nulls") {
    Table t{s, {{1.0, Value{}}, {2.0, std::string("x")}}};
    CHECK(validate_data(t, s).conformant());
  }
  SUBCASE("null in a non-nullable column is flagged with the row") {
    Table t{s, {{1.0, Value{}}, {Value{}, Value{}}}};
    ConformanceReport r = validate_data(t, s);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].code == "UnexpectedNull");
    CHECK(r.violations[0].column == "col4");
    CHECK(r.violations[0].row == 1);
  }
  SUBCASE("empty table conforms to anything") {
    CHECK(validate_data(Table{s, {}}, s).conformant());
  }
  SUBCASE("wrong value type is a TypeMismatch violation") {
    Table t{s, {{std::string("oops"), Value{}}}};
    ConformanceReport r = validate_data(t, s);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].code == "TypeMismatch");
  }
  SUBCASE("column set mismatches") {
    SchemaContract other = s;
    other.columns.push_back({"extra", {BaseType::Int64, true}, {}});
    Table t{other, {}};
    ConformanceReport r = validate_data(t, s);
    CHECK(r.violations.size() == 1);
    CHECK(r.violations[0].code == "ExtraColumn");
    ConformanceReport r2 = validate_data(Table{s, {}}, other);
    CHECK(r2.violations.size() == 1);
    CHECK(r2.violations[0].code == "MissingColumn");
  }
}

TEST_CASE("lineage trees") {
  PipelinePlan plan = load_manifest(kFamily);

  SUBCASE("col2 chains by identity back to the source") {
    LineageNode l = lineage(plan, "grand_child", "col2");
    std::vector<std::string> chain;
    const LineageNode* cur = &l;
    while (true) {
      chain.push_back(cur->table);
      CHECK(cur->kind == lang::LineageKind::Identity);
      if (cur->children.empty()) break;
      REQUIRE(cur->children.size() == 1);
      cur = &cur->children[0];
    }
    CHECK(chain == std::vector<std::string>({"grand_child", "child_table",
                                             "parent_table", "raw_table"}));
  }
  SUBCASE("renamed cast makes col4 fresh at child_table") {
    LineageNode l = lineage(plan, "child_table", "col4");
    CHECK(l.kind == lang::LineageKind::Fresh);
    CHECK(l.children.empty());
  }
  SUBCASE("same-name cast tracks through grand_child") {
    LineageNode l = lineage(plan, "grand_child", "col4");
    CHECK(l.kind == lang::LineageKind::Cast);
    REQUIRE(l.children.size() == 1);
    CHECK(l.children[0].table == "child_table");
  }
  SUBCASE("family_friend col5 is notnull over child_table.col5") {
    LineageNode l = lineage(plan, "family_friend", "col5");
    CHECK(l.kind == lang::LineageKind::NotNull);
    REQUIRE(l.children.size() == 1);
    CHECK(l.children[0].table == "child_table");
    CHECK(l.children[0].column == "col5");
  }
  SUBCASE("unknown column") {
    CHECK_THROWS_AS(lineage(plan, "grand_child", "nope"), Error);
    CHECK_THROWS_AS(lineage(plan, "no_such_node", "col2"), Error);
  }
}

TEST_CASE("validation-skip planning") {
  PipelinePlan plan = load_manifest(kFamily);
  auto skips = plan_validation_skips(plan);

  // identity moves below a validated non-null node output are skippable
  CHECK(skips.count({"grand_child", "col2", "notnull"}) == 1);
  CHECK(skips.count({"child_table", "col2", "notnull"}) == 1);
  CHECK(skips.count({"family_friend", "col2", "notnull"}) == 1);
  CHECK(skips.count({"family_friend", "col4", "notnull"}) == 1);
  // a filter established col5's non-nullness here, so it must be checked
  CHECK(skips.count({"family_friend", "col5", "notnull"}) == 0);
  // casts re-derive values; never skipped
  CHECK(skips.count({"grand_child", "col4", "notnull"}) == 0);
  // nothing in the first node can lean on a validated upstream node
  for (const auto& [node, col, kind] : skips) CHECK(node != "parent_table");

  SUBCASE("single-node plan has an empty skip set") {
    PipelinePlan one = parse_manifest(
        "schema S { a: int64 }\n"
        "source src: S\n"
        "-- n: S <- src\n"
        "select a from src\n",
        "inline");
    CHECK(plan_validation_skips(one).empty());
  }
  SUBCASE("downstream identity of a skippable column chains") {
    PipelinePlan ext = parse_manifest(
        "schema S { col5: string }\n"
        "schema C { col5: string nullable }\n"
        "source src: C\n"
        "-- filtered: S <- src\n"
        "select col5 from src where col5 is not null\n"
        "-- passthru: S <- filtered\n"
        "select col5 from filtered\n"
        "-- rederived: C <- src\n"
        "select cast(col5 as string?) as col5 from src\n",
        "inline");
    auto s = plan_validation_skips(ext);
    CHECK(s.count({"passthru", "col5", "notnull"}) == 1);
    CHECK(s.count({"filtered", "col5", "notnull"}) == 0);
    CHECK(s.count({"rederived", "col5", "notnull"}) == 0);
  }
}

// ---- properties ------------------------------------------------------

namespace {

// Executes a plan over concrete source tables, validating each node output
// against its declared contract the way the run engine does.
struct ExecResult {
  std::vector<std::pair<std::string, ConformanceReport>> reports;
  std::optional<Errc> failure;
};

ExecResult execute_plan(const PipelinePlan& plan,
                        std::map<std::string, Table> tables, bool with_skips) {
  std::set<std::tuple<std::string, std::string, std::string>> skips;
  if (with_skips) skips = plan_validation_skips(plan);
  ExecResult res;
  for (const auto& node : plan.nodes) {
    Table out;
    try {
      out = lang::evaluate(*node.transform, tables);
    } catch (const Error& e) {
      res.failure = e.code();
      return res;
    }
    std::set<std::string> skip_cols;
    for (const auto& c : node.declared_output.columns)
      if (skips.count({node.name, c.name, "notnull"})) skip_cols.insert(c.name);
    out.schema = node.declared_output;  // declared contract is the interface
    res.reports.emplace_back(node.name,
                             validate_data(out, node.declared_output, skip_cols));
    tables[node.name] = std::move(out);
  }
  return res;
}

struct PlanGen {
  std::mt19937 rng;
  explicit PlanGen(uint32_t seed) : rng(seed) {}
  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }

  ColumnType type() {
    static const BaseType bases[] = {BaseType::String, BaseType::Int64,
                                     BaseType::Float64, BaseType::Bool};
    return {bases[pick(4)], pick(2) == 0};
  }

  // Linear pipelines: each node reads the previous table. Declared output
  // is exactly the inferred schema, so check_plan must come back clean.
  PipelinePlan make() {
    PipelinePlan plan;
    plan.file = "generated";
    SchemaContract src;
    src.name = "Src";
    int cols = 2 + pick(3);
    for (int c = 0; c < cols; ++c)
      src.columns.push_back({"c" + std::to_string(c), type(), {}});
    plan.sources["src"] = src;
    plan.schemas["Src"] = src;

    std::string prev = "src";
    SchemaContract prev_schema = src;
    int depth = 1 + pick(4);
    for (int d = 0; d < depth; ++d) {
      NodeContract node;
      node.name = "n" + std::to_string(d);
      node.inputs = {prev};

      std::string stmt = "select ";
      int items = 1 + pick((int)prev_schema.columns.size());
      for (int i = 0; i < items; ++i) {
        const ColumnContract& c =
            prev_schema.columns[pick((int)prev_schema.columns.size())];
        if (i) stmt += ", ";
        switch (pick(4)) {
          case 0:
            if (c.type.base == BaseType::Float64) {
              stmt += "cast(" + c.name + " as int64" +
                      (c.type.nullable ? "?" : "") + ") as o" +
                      std::to_string(i);
              break;
            }
            [[fallthrough]];
          case 1:
            stmt += "cast(" + c.name + " as " +
                    std::string(base_type_name(c.type.base)) + "?) as o" +
                    std::to_string(i);
            break;
          default:
            stmt += c.name + " as o" + std::to_string(i);
        }
      }
      stmt += " from " + prev;
      if (pick(3) == 0) {
        const ColumnContract& c =
            prev_schema.columns[pick((int)prev_schema.columns.size())];
        if (c.type.nullable) stmt += " where " + c.name + " is not null";
      }
      node.statement_text = stmt;
      node.transform = lang::parse(stmt);
      lang::Inference inf =
          lang::infer_schema(*node.transform, {{prev, prev_schema}});
      node.declared_output = inf.schema;
      node.declared_output.name = "S" + std::to_string(d);
      plan.schemas[node.declared_output.name] = node.declared_output;
      prev = node.name;
      prev_schema = node.declared_output;
      plan.nodes.push_back(std::move(node));
    }
    return plan;
  }

  Value value(const ColumnType& t) {
    if (t.nullable && pick(4) == 0) return Value{};
    switch (t.base) {
      case BaseType::String: return Value{std::string(1, 'a' + pick(3))};
      case BaseType::Int64: return Value{static_cast<int64_t>(pick(19) - 9)};
      case BaseType::Float64: return Value{(pick(19) - 9) / 4.0};
      default: return Value{pick(2) == 0};
    }
  }

  Table table(const SchemaContract& s) {
    Table t{s, {}};
    int rows = pick(12);
    for (int r = 0; r < rows; ++r) {
      Row row;
      for (const auto& c : s.columns) row.push_back(value(c.type));
      t.rows.push_back(std::move(row));
    }
    return t;
  }
};

}  // namespace

TEST_CASE("property: clean check_plan means no type errors at runtime") {
  PlanGen gen(4242);
  for (int i = 0; i < 120; ++i) {
    PipelinePlan plan = gen.make();
    auto ds = check_plan(plan, plan.sources);
    for (const auto& d : ds) CAPTURE(d.to_line());
    REQUIRE(ds.empty());

    std::map<std::string, Table> tables;
    tables["src"] = gen.table(plan.sources["src"]);
    ExecResult res = execute_plan(plan, tables, false);
    if (res.failure) {
      // runtime data failures are fine; plan-time categories are not
      CHECK(*res.failure != Errc::TypeMismatch);
      CHECK(*res.failure != Errc::IllegalNarrowing);
      CHECK(*res.failure != Errc::UnknownColumn);
      continue;
    }
    for (const auto& [node, rep] : res.reports) {
      CAPTURE(node);
      CAPTURE(rep.summary());
      CHECK(rep.conformant());
    }

    // differential: skips never change conformance outcomes
    ExecResult skipped = execute_plan(plan, tables, true);
    REQUIRE(!skipped.failure);
    REQUIRE(skipped.reports.size() == res.reports.size());
    for (size_t n = 0; n < res.reports.size(); ++n)
      CHECK(skipped.reports[n].second.violations ==
            res.reports[n].second.violations);
  }
}

TEST_CASE("fail fast: manifest errors surface before any data is read") {
  // the statement has a syntax error AND the source data (if anyone looked)
  // has a null in a non-nullable column; only the manifest error appears
  const char* text =
      "schema S { a: int64 }\n"
      "source src: S\n"
      "-- n: S <- src\n"
      "select a frm src\n";
  CHECK_THROWS_AS(parse_manifest(text, "inline"), Error);
  try {
    parse_manifest(text, "inline");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ManifestParseError);
    CHECK(e.message().find("inline:3") != std::string::npos);
  }
}
