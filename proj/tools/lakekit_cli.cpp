#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lakekit/catalog.hpp"
#include "lakekit/contracts.hpp"
#include "lakekit/csv.hpp"
#include "lakekit/errors.hpp"
#include "lakekit/merge.hpp"
#include "lakekit/model.hpp"
#include "lakekit/run.hpp"

using nlohmann::json;
using namespace lakekit;

namespace {

// LAKEKIT_FIXED_TIME pins the commit clock so output is reproducible in
// scripts and golden tests
Clock make_clock() {
  if (const char* t = std::getenv("LAKEKIT_FIXED_TIME")) {
    int64_t v = std::strtoll(t, nullptr, 10);
    return [v] { return v; };
  }
  return {};
}

struct Ctx {
  std::string root = "./.lakekit";
  bool json_out = false;

  Repository open() { return Repository::open(root, make_clock()); }

  void emit(const json& doc, const std::string& text) {
    if (json_out)
      std::cout << doc.dump(2) << "\n";
    else if (!text.empty())
      std::cout << text;
  }
};

std::string short_id(const std::string& hex) { return hex.substr(0, 12); }

std::string pad(const std::string& s, size_t w) {
  return s + std::string(s.size() < w ? w - s.size() : 0, ' ');
}

std::string render_rows(const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width(header.size());
  for (size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (size_t i = 0; i < r.size(); ++i)
      width[i] = std::max(width[i], r[i].size());
  std::ostringstream os;
  for (size_t i = 0; i < header.size(); ++i)
    os << (i ? "  " : "")
       << pad(header[i], i + 1 < header.size() ? width[i] : 0);
  os << "\n";
  for (const auto& r : rows) {
    for (size_t i = 0; i < r.size(); ++i)
      os << (i ? "  " : "") << pad(r[i], i + 1 < r.size() ? width[i] : 0);
    os << "\n";
  }
  return os.str();
}

json schema_json(const SchemaContract& s) { return s.to_json(); }

json record_json(const RunRecord& rec) { return rec.to_json(); }

std::string record_text(const RunRecord& rec) {
  std::ostringstream os;
  os << "run " << rec.run_id << ": " << run_status_name(rec.status) << "\n";
  os << "  target " << rec.target_branch;
  if (!rec.start_commit.hex.empty())
    os << " @ " << short_id(rec.start_commit.hex);
  os << "\n";
  if (!rec.publish_commit.hex.empty())
    os << "  published " << short_id(rec.publish_commit.hex) << "\n";
  if (!rec.resumed_from.empty())
    os << "  resumed from " << rec.resumed_from << "\n";
  for (const auto& n : rec.node_results) {
    os << "  node " << n.node << ": " << n.status;
    if (!n.commit.hex.empty()) os << " " << short_id(n.commit.hex);
    if (!n.diagnostic.empty()) os << " (" << n.diagnostic << ")";
    os << "\n";
  }
  for (const auto& d : rec.diagnostics) os << "  ! " << d << "\n";
  return os.str();
}

int run_exit(const RunRecord& rec) {
  return rec.status == RunStatus::Committed ? 0 : 1;
}

std::map<std::string, SchemaContract> lake_schemas_for(
    Repository& repo, const PipelinePlan& plan, const std::string& ref) {
  std::map<std::string, SchemaContract> out;
  for (const auto& [table, declared] : plan.sources) {
    try {
      out[table] = repo.table_schema(ref, table);
    } catch (const Error& e) {
      if (e.code() != Errc::NoSuchTable) throw;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"versioned lakehouse catalog with correct-by-design pipelines"};
  app.require_subcommand(1);

  Ctx ctx;
  if (const char* env = std::getenv("LAKEKIT_REPO")) ctx.root = env;
  app.add_option("--repo", ctx.root, "repository root (env LAKEKIT_REPO)");
  app.add_flag("--json", ctx.json_out, "machine-readable output");

  int rc = 0;

  // --- init -------------------------------------------------------------
  auto* init = app.add_subcommand("init", "create an empty repository");
  init->callback([&] {
    Repository repo = Repository::init(ctx.root, make_clock());
    ctx.emit({{"root", ctx.root}, {"head", repo.resolve_ref("main").hex}},
             "initialized empty repository at " + ctx.root + "\n");
  });

  // --- import -----------------------------------------------------------
  auto* import = app.add_subcommand("import", "import a typed-header CSV");
  auto imp = std::make_shared<std::tuple<std::string, std::string, std::string>>(
      "", "", "main");
  import->add_option("table", std::get<0>(*imp), "target table")->required();
  import->add_option("csvfile", std::get<1>(*imp), "CSV file")->required();
  import->add_option("--branch", std::get<2>(*imp), "target branch");
  import->callback([&, imp] {
    auto& [table, file, branch] = *imp;
    Repository repo = ctx.open();
    Table data = read_csv_file(file, table);
    Commit c = repo.write_table(branch, table, data,
                                repo.resolve_ref(branch));
    ctx.emit({{"table", table},
              {"branch", branch},
              {"rows", data.rows.size()},
              {"commit", c.id.hex},
              {"snapshot", c.tables.at(table).hex}},
             "imported " + std::to_string(data.rows.size()) + " rows into " +
                 table + " on " + branch + " (commit " + short_id(c.id.hex) +
                 ")\n");
  });

  // --- branch -----------------------------------------------------------
  auto* branch = app.add_subcommand("branch", "manage branches");
  branch->require_subcommand(1);

  auto* bcreate = branch->add_subcommand("create", "create a branch");
  auto bc = std::make_shared<std::tuple<std::string, std::string, bool>>(
      "", "main", false);
  bcreate->add_option("name", std::get<0>(*bc))->required();
  bcreate->add_option("--from", std::get<1>(*bc), "source ref");
  bcreate->add_flag("--allow-from-aborted", std::get<2>(*bc),
                    "disable the aborted-lineage guardrail");
  bcreate->callback([&, bc] {
    auto& [name, from, allow] = *bc;
    Repository repo = ctx.open();
    Branch b = repo.create_branch(name, from, BranchClass::Normal, allow);
    ctx.emit({{"name", b.name}, {"head", b.head.hex}},
             "branch " + b.name + " at " + short_id(b.head.hex) + "\n");
  });

  auto* blist = branch->add_subcommand("list", "list branches");
  blist->callback([&] {
    Repository repo = ctx.open();
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    for (const Branch& b : repo.list_branches()) {
      doc.push_back({{"name", b.name},
                     {"head", b.head.hex},
                     {"class", branch_class_name(b.cls)}});
      std::string cls = branch_class_name(b.cls);
      if (b.cls == BranchClass::Aborted) cls += "  [aborted lineage]";
      rows.push_back({b.name, short_id(b.head.hex), cls});
    }
    ctx.emit(doc, render_rows({"name", "head", "class"}, rows));
  });

  auto* bdelete = branch->add_subcommand("delete", "delete a branch");
  auto bdel = std::make_shared<std::string>();
  bdelete->add_option("name", *bdel)->required();
  bdelete->callback([&, bdel] {
    Repository repo = ctx.open();
    repo.delete_branch(*bdel);
    ctx.emit({{"deleted", *bdel}}, "deleted branch " + *bdel + "\n");
  });

  // --- tag --------------------------------------------------------------
  auto* tag = app.add_subcommand("tag", "tag a commit");
  auto tg = std::make_shared<std::pair<std::string, std::string>>();
  tag->add_option("name", tg->first)->required();
  tag->add_option("ref", tg->second)->required();
  tag->callback([&, tg] {
    Repository repo = ctx.open();
    Tag t = repo.tag_commit(tg->first, tg->second);
    ctx.emit({{"name", t.name}, {"target", t.target.hex}},
             "tag " + t.name + " -> " + short_id(t.target.hex) + "\n");
  });

  // --- log --------------------------------------------------------------
  auto* log = app.add_subcommand("log", "commit history of a ref");
  auto lg = std::make_shared<std::pair<std::string, int64_t>>("main", 0);
  log->add_option("ref", lg->first);
  log->add_option("--limit", lg->second, "max commits");
  log->callback([&, lg] {
    Repository repo = ctx.open();
    auto tainted = repo.aborted_commits();
    size_t limit = lg->second > 0 ? size_t(lg->second) : SIZE_MAX;
    json doc = json::array();
    std::ostringstream os;
    for (const Commit& c : repo.log(lg->first, limit)) {
      bool bad = tainted.count(c.id.hex) != 0;
      json jc = {{"commit", c.id.hex},
                 {"message", c.message},
                 {"timestamp", c.timestamp},
                 {"aborted_lineage", bad}};
      for (const auto& p : c.parents) jc["parents"].push_back(p.hex);
      doc.push_back(jc);
      os << short_id(c.id.hex) << "  " << c.message;
      if (bad) os << "  [aborted lineage]";
      os << "\n";
    }
    ctx.emit(doc, os.str());
  });

  // --- diff -------------------------------------------------------------
  auto* dif = app.add_subcommand("diff", "table-map diff between two refs");
  auto df = std::make_shared<std::pair<std::string, std::string>>();
  dif->add_option("from", df->first)->required();
  dif->add_option("to", df->second)->required();
  dif->callback([&, df] {
    Repository repo = ctx.open();
    TableDiff d = diff(repo, df->first, df->second);
    json doc = {{"added", d.added}, {"removed", d.removed}};
    std::ostringstream os;
    for (const auto& t : d.added) os << "A  " << t << "\n";
    for (const auto& t : d.removed) os << "D  " << t << "\n";
    for (const auto& [t, snaps] : d.changed) {
      doc["changed"].push_back({{"table", t},
                                {"from", snaps.first.hex},
                                {"to", snaps.second.hex}});
      os << "M  " << t << "\n";
    }
    ctx.emit(doc, d.empty() ? "no differences\n" : os.str());
  });

  // --- merge ------------------------------------------------------------
  auto* mrg = app.add_subcommand("merge", "merge one branch into another");
  auto mg = std::make_shared<std::tuple<std::string, std::string, bool>>(
      "", "", false);
  mrg->add_option("source", std::get<0>(*mg))->required();
  mrg->add_option("into", std::get<1>(*mg))->required();
  mrg->add_flag("--allow-from-aborted", std::get<2>(*mg),
                "disable the aborted-lineage guardrail");
  mrg->callback([&, mg] {
    auto& [source, into, allow] = *mg;
    Repository repo = ctx.open();
    MergePolicy policy;
    policy.allow_from_aborted = allow;
    MergeResult res =
        merge(repo, source, into, repo.branch(into).head, policy);
    if (!res.ok()) {
      json doc = {{"ok", false}, {"conflicts", res.conflicts}};
      std::ostringstream os;
      for (const auto& t : res.conflicts) os << "conflict: " << t << "\n";
      ctx.emit(doc, os.str());
      rc = 1;
      return;
    }
    ctx.emit({{"ok", true},
              {"kind", merge_kind_name(res.kind)},
              {"commit", res.merge_commit.hex}},
             std::string(merge_kind_name(res.kind)) + " merge, " + into +
                 " at " + short_id(res.merge_commit.hex) + "\n");
  });

  // --- query ------------------------------------------------------------
  auto* query = app.add_subcommand("query", "print a table at a ref");
  auto q = std::make_shared<std::pair<std::string, std::string>>();
  query->add_option("ref", q->first)->required();
  query->add_option("table", q->second)->required();
  query->callback([&, q] {
    Repository repo = ctx.open();
    Table t = repo.read_table(q->first, q->second);
    json doc = {{"schema", schema_json(t.schema)}, {"rows", json::array()}};
    std::vector<std::string> header;
    for (const auto& c : t.schema.columns)
      header.push_back(c.name + ":" + to_string(c.type));
    std::vector<std::vector<std::string>> rows;
    for (const Row& r : t.rows) {
      json jr = json::array();
      std::vector<std::string> cells;
      for (size_t i = 0; i < r.size(); ++i) {
        jr.push_back(value_to_json(r[i]));
        cells.push_back(format_value(r[i]));
      }
      doc["rows"].push_back(jr);
      rows.push_back(std::move(cells));
    }
    ctx.emit(doc, render_rows(header, rows));
  });

  // --- check ------------------------------------------------------------
  auto* check = app.add_subcommand("check", "plan-time manifest check");
  auto ck = std::make_shared<std::pair<std::string, std::string>>("", "main");
  check->add_option("manifest", ck->first)->required();
  check->add_option("--ref", ck->second, "lake ref to check against");
  check->callback([&, ck] {
    Repository repo = ctx.open();
    PipelinePlan plan = load_manifest(ck->first);
    auto diags = check_plan(plan, lake_schemas_for(repo, plan, ck->second));
    json doc = {{"ok", !has_errors(diags)}, {"diagnostics", json::array()}};
    std::ostringstream os;
    for (const auto& d : diags) {
      doc["diagnostics"].push_back({{"code", d.code},
                                    {"node", d.node},
                                    {"message", d.message}});
      os << d.to_line() << "\n";
    }
    if (diags.empty()) os << "ok: " << plan.nodes.size() << " nodes check clean\n";
    ctx.emit(doc, os.str());
    if (has_errors(diags)) rc = 1;
  });

  // --- run --------------------------------------------------------------
  auto* runc = app.add_subcommand("run", "execute a pipeline transactionally");
  struct RunArgs {
    std::string manifest, ref = "main";
    std::string fail_at;
    RunOptions opts;
  };
  auto ra = std::make_shared<RunArgs>();
  runc->add_option("manifest", ra->manifest)->required();
  runc->add_option("--ref", ra->ref, "target branch");
  runc->add_option("--fail-at", ra->fail_at, "inject a failure at a node");
  runc->add_flag("--fail-before-publish", ra->opts.fail_before_publish,
                 "inject a crash after the last node");
  runc->add_flag("--allow-branch-from-aborted",
                 ra->opts.allow_branch_from_aborted);
  runc->add_flag("--allow-merge-from-aborted",
                 ra->opts.allow_merge_from_aborted);
  runc->add_flag("!--no-skip-redundant-checks", ra->opts.skip_redundant_checks,
                 "re-validate even provably redundant checks");
  runc->callback([&, ra] {
    Repository repo = ctx.open();
    RunEngine engine(repo);
    if (!ra->fail_at.empty()) ra->opts.fail_at_node = ra->fail_at;
    RunRecord rec = engine.run(ra->manifest, ra->ref, ra->opts);
    ctx.emit(record_json(rec), record_text(rec));
    rc = run_exit(rec);
  });

  // --- runs -------------------------------------------------------------
  auto* runs = app.add_subcommand("runs", "inspect the run registry");
  runs->require_subcommand(1);

  auto* rshow = runs->add_subcommand("show", "show one run record");
  auto rid = std::make_shared<std::string>();
  rshow->add_option("run_id", *rid)->required();
  rshow->callback([&, rid] {
    Repository repo = ctx.open();
    RunEngine engine(repo);
    RunRecord rec = engine.get_run(*rid);
    ctx.emit(record_json(rec), record_text(rec));
  });

  auto* rlist = runs->add_subcommand("list", "list all runs");
  rlist->callback([&] {
    Repository repo = ctx.open();
    RunEngine engine(repo);
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    for (const RunRecord& rec : engine.list_runs()) {
      doc.push_back({{"run_id", rec.run_id},
                     {"status", run_status_name(rec.status)},
                     {"target", rec.target_branch}});
      rows.push_back({rec.run_id, run_status_name(rec.status),
                      rec.target_branch});
    }
    ctx.emit(doc, render_rows({"run", "status", "target"}, rows));
  });

  // --- reproduce --------------------------------------------------------
  auto* repr = app.add_subcommand("reproduce",
                                  "re-execute an archived run on a new branch");
  auto rp = std::make_shared<std::pair<std::string, std::string>>();
  repr->add_option("run_id", rp->first)->required();
  repr->add_option("--branch", rp->second, "branch to create")->required();
  repr->callback([&, rp] {
    Repository repo = ctx.open();
    RunEngine engine(repo);
    auto [b, rec] = engine.reproduce(rp->first, rp->second);
    json doc = record_json(rec);
    doc["branch"] = b.name;
    ctx.emit(doc, "reproduced on branch " + b.name + "\n" + record_text(rec));
    rc = run_exit(rec);
  });

  // --- resume -----------------------------------------------------------
  auto* res = app.add_subcommand("resume", "continue an aborted run");
  struct ResumeArgs {
    std::string run_id, manifest;
    RunOptions opts;
  };
  auto rs = std::make_shared<ResumeArgs>();
  res->add_option("run_id", rs->run_id)->required();
  res->add_option("manifest", rs->manifest)->required();
  res->add_flag("--allow-branch-from-aborted",
                rs->opts.allow_branch_from_aborted,
                "required: resume reads the aborted branch");
  res->callback([&, rs] {
    Repository repo = ctx.open();
    RunEngine engine(repo);
    RunRecord rec = engine.resume_from_aborted(rs->run_id, rs->manifest,
                                               rs->opts);
    ctx.emit(record_json(rec), record_text(rec));
    rc = run_exit(rec);
  });

  // --- model ------------------------------------------------------------
  auto* mdl = app.add_subcommand("model", "bounded model checker");
  mdl->require_subcommand(1);

  struct ModelArgs {
    model::Bounds bounds;
    std::string guardrail = "on";
    std::string invariant;
    std::string script;
    std::string scratch;

    model::Guardrail policy() const {
      if (guardrail == "on") return model::Guardrail::On;
      if (guardrail == "off") return model::Guardrail::Off;
      throw CLI::ValidationError("--guardrail must be on or off");
    }
  };
  auto ma = std::make_shared<ModelArgs>();
  auto add_bounds = [&](CLI::App* cmd) {
    cmd->add_option("--tables", ma->bounds.max_tables);
    cmd->add_option("--snapshots", ma->bounds.max_snapshots);
    cmd->add_option("--commits", ma->bounds.max_commits);
    cmd->add_option("--branches", ma->bounds.max_branches);
    cmd->add_option("--runs", ma->bounds.max_runs);
    cmd->add_option("--steps", ma->bounds.max_steps);
    cmd->add_option("--cap", ma->bounds.state_cap);
    cmd->add_option("--guardrail", ma->guardrail, "on|off");
  };

  auto* menum = mdl->add_subcommand("enumerate", "count reachable states");
  add_bounds(menum);
  menum->callback([&, ma] {
    model::EnumStats st = model::enumerate(ma->bounds, ma->policy());
    json doc = {{"states", st.states},
                {"transitions", st.transitions},
                {"frontier", st.frontier}};
    std::ostringstream os;
    os << st.states << " states, " << st.transitions
       << " transitions, frontier";
    for (uint64_t f : st.frontier) os << " " << f;
    os << "\n";
    ctx.emit(doc, os.str());
  });

  auto* mcheck = mdl->add_subcommand("check", "check an invariant");
  mcheck->add_option("invariant", ma->invariant)->required();
  add_bounds(mcheck);
  mcheck->callback([&, ma] {
    model::CheckResult r = model::check(ma->invariant, ma->bounds,
                                        ma->policy());
    if (r.ok) {
      ctx.emit({{"ok", true}, {"states", r.stats.states}},
               "ok: " + ma->invariant + " holds over " +
                   std::to_string(r.stats.states) + " reachable states\n");
      return;
    }
    std::string script = model::to_script(*r.counterexample);
    json doc = {{"ok", false},
                {"violation", r.violation},
                {"trace", script},
                {"length", r.counterexample->steps.size()}};
    std::ostringstream os;
    os << "counterexample (" << r.counterexample->steps.size()
       << " actions): " << r.violation << "\n"
       << script << model::render_diagram(*r.counterexample);
    ctx.emit(doc, os.str());
    rc = 1;
  });

  auto* mreplay = mdl->add_subcommand("replay",
                                      "replay a trace script concretely");
  mreplay->add_option("script", ma->script, "trace script file")->required();
  mreplay->add_option("--scratch", ma->scratch,
                      "directory for the throwaway repository");
  mreplay->callback([&, ma] {
    std::ifstream in(ma->script);
    if (!in) throw Error(Errc::IoError, "cannot open " + ma->script);
    std::ostringstream buf;
    buf << in.rdbuf();
    model::Trace t = model::from_script(buf.str());
    std::filesystem::path scratch = ma->scratch;
    if (ma->scratch.empty()) {
      std::random_device rd;
      scratch = std::filesystem::temp_directory_path() /
                ("lakekit-replay-" + std::to_string(rd()));
    }
    model::ReplayReport rep = model::replay(t, scratch);
    json doc = {{"ok", true}, {"actions", rep.actions}, {"log", rep.log}};
    std::ostringstream os;
    for (const auto& l : rep.log) os << l << "\n";
    ctx.emit(doc, os.str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    if (ctx.json_out)
      std::cout << json{{"ok", false},
                        {"code", errc_name(e.code())},
                        {"error", e.message()}}
                       .dump(2)
                << "\n";
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
