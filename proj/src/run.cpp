#include "lakekit/run.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lakekit/conformance.hpp"
#include "lakekit/errors.hpp"
#include "lakekit/eval.hpp"
#include "lakekit/merge.hpp"

namespace lakekit {

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Committed: return "committed";
    case RunStatus::Aborted: return "aborted";
    default: return "rejected";
  }
}

namespace {

RunStatus status_from_name(const std::string& s) {
  if (s == "running") return RunStatus::Running;
  if (s == "committed") return RunStatus::Committed;
  if (s == "aborted") return RunStatus::Aborted;
  return RunStatus::Rejected;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

nlohmann::json RunRecord::to_json() const {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : node_results)
    results.push_back({{"node", r.node},
                       {"status", r.status},
                       {"commit", r.commit.hex},
                       {"diagnostic", r.diagnostic}});
  nlohmann::json j{{"run_id", run_id},
                   {"target_branch", target_branch},
                   {"start_commit", start_commit.hex},
                   {"code_hash", code_hash},
                   {"txn_branch", txn_branch},
                   {"status", run_status_name(status)},
                   {"node_results", results},
                   {"diagnostics", diagnostics},
                   {"publish_commit", publish_commit.hex},
                   {"finished_at", finished_at},
                   {"resumed_from", resumed_from}};
  if (fail_at_node) j["fail_at_node"] = *fail_at_node;
  return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.run_id = j.at("run_id");
  r.target_branch = j.at("target_branch");
  r.start_commit.hex = j.at("start_commit");
  r.code_hash = j.at("code_hash");
  r.txn_branch = j.at("txn_branch");
  r.status = status_from_name(j.at("status"));
  for (const auto& n : j.at("node_results"))
    r.node_results.push_back({n.at("node"), n.at("status"),
                              CommitId{n.at("commit")}, n.at("diagnostic")});
  r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
  r.publish_commit.hex = j.at("publish_commit");
  r.finished_at = j.at("finished_at");
  r.resumed_from = j.at("resumed_from");
  if (j.contains("fail_at_node")) r.fail_at_node = j.at("fail_at_node");
  return r;
}

RunEngine::RunEngine(Repository& repo)
    : repo_(repo), runs_dir_(repo.root() / "runs") {
  std::filesystem::create_directories(runs_dir_);
  // crash recovery: a running record means the process died mid-run
  for (RunRecord rec : list_runs()) {
    if (rec.status != RunStatus::Running) continue;
    rec.status = RunStatus::Aborted;
    rec.diagnostics.push_back("recovered: process exited mid-run");
    rec.finished_at = repo_.now();
    if (repo_.branch_exists(rec.txn_branch)) {
      Branch b = repo_.branch(rec.txn_branch);
      repo_.set_branch_class(rec.txn_branch, BranchClass::Aborted);
      std::vector<CommitId> tainted;
      for (const Commit& c : repo_.log(rec.txn_branch)) {
        if (c.id == b.created_from) break;
        tainted.push_back(c.id);
      }
      repo_.record_aborted_commits(tainted);
    }
    persist(rec);
  }
}

std::string RunEngine::new_run_id() {
  // single process per repo (lock file), so a plain counter file suffices
  std::filesystem::path counter = runs_dir_ / "COUNTER";
  uint64_t n = 0;
  {
    std::ifstream in(counter);
    if (in) in >> n;
  }
  ++n;
  {
    std::ofstream out(counter, std::ios::trunc);
    out << n << "\n";
  }
  static std::mt19937_64 rng{std::random_device{}()};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu-%04x",
                static_cast<unsigned long long>(n),
                static_cast<unsigned>(rng() & 0xffff));
  return buf;
}

void RunEngine::persist(const RunRecord& rec) const {
  std::filesystem::path p = runs_dir_ / (rec.run_id + ".json");
  std::filesystem::path tmp = runs_dir_ / (rec.run_id + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << rec.to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, p);
}

RunRecord RunEngine::get_run(const std::string& run_id) const {
  std::filesystem::path p = runs_dir_ / (run_id + ".json");
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::UnknownRun, "no run " + run_id);
  return RunRecord::from_json(nlohmann::json::parse(in));
}

std::vector<RunRecord> RunEngine::list_runs() const {
  std::vector<std::string> ids;
  for (const auto& e : std::filesystem::directory_iterator(runs_dir_)) {
    std::string name = e.path().filename().string();
    if (name.size() > 5 && name.ends_with(".json"))
      ids.push_back(name.substr(0, name.size() - 5));
  }
  std::sort(ids.begin(), ids.end());
  std::vector<RunRecord> out;
  for (const auto& id : ids) out.push_back(get_run(id));
  return out;
}

void RunEngine::abort_run(RunRecord& rec, const CommitId& base) {
  repo_.set_branch_class(rec.txn_branch, BranchClass::Aborted);
  std::vector<CommitId> tainted;
  for (const Commit& c : repo_.log(rec.txn_branch)) {
    if (c.id == base) break;
    tainted.push_back(c.id);
  }
  repo_.record_aborted_commits(tainted);
  rec.status = RunStatus::Aborted;
  rec.finished_at = repo_.now();
  persist(rec);
}

RunRecord RunEngine::execute(const PipelinePlan& plan,
                             const std::string& manifest_text,
                             const std::string& target, const RunOptions& opts,
                             const std::string& base_ref,
                             const std::vector<std::string>& skip_nodes,
                             const std::string& resumed_from) {
  Branch tb = repo_.branch(target);
  if (tb.cls != BranchClass::Normal)
    throw Error(Errc::UnknownRef,
                "target branch " + target + " is not a normal branch");
  if (opts.fail_at_node && !plan.find_node(*opts.fail_at_node))
    throw Error(Errc::UnknownRef,
                "fail_at_node names no plan node: " + *opts.fail_at_node);

  auto hook = [&](const std::string& stage) {
    if (opts.step_hook) opts.step_hook(stage);
  };

  RunRecord rec;
  rec.run_id = new_run_id();
  rec.target_branch = target;
  rec.code_hash = repo_.archive_bytes(manifest_text);
  rec.fail_at_node = opts.fail_at_node;
  rec.resumed_from = resumed_from;

  // fail-fast: composition is checked before any branch exists
  std::map<std::string, SchemaContract> lake;
  for (const auto& [table, unused] : plan.sources) {
    try {
      lake[table] = repo_.table_schema(base_ref, table);
    } catch (const Error& e) {
      if (e.code() != Errc::NoSuchTable) throw;
    }
  }
  std::vector<Diagnostic> diags = check_plan(plan, lake);
  if (has_errors(diags)) {
    for (const auto& d : diags) rec.diagnostics.push_back(d.to_line());
    rec.status = RunStatus::Rejected;
    rec.finished_at = repo_.now();
    persist(rec);
    return rec;
  }

  // step 1: transactional branch off the base, target head snapshotted
  rec.start_commit = repo_.resolve_ref(target);
  CommitId base = repo_.resolve_ref(base_ref);
  rec.txn_branch = "txn/" + rec.run_id;
  repo_.create_branch(rec.txn_branch, base_ref, BranchClass::Transactional,
                      opts.allow_branch_from_aborted);
  persist(rec);  // running; crash from here on recovers to aborted

  std::set<std::tuple<std::string, std::string, std::string>> skips;
  if (opts.skip_redundant_checks) skips = plan_validation_skips(plan);

  std::set<std::string> skip_set(skip_nodes.begin(), skip_nodes.end());
  for (const auto& node : plan.nodes) {
    if (skip_set.count(node.name)) {
      rec.node_results.push_back({node.name, "skipped", {}, ""});
      continue;
    }
    hook("node:" + node.name);
    std::string failure;
    if (opts.fail_at_node && *opts.fail_at_node == node.name) {
      failure = "injected failure at node " + node.name;
    } else {
      try {
        // step 2: evaluate against the txn branch's current table-map
        std::map<std::string, Table> inputs;
        for (const auto& in : node.inputs)
          inputs[in] = repo_.read_table(rec.txn_branch, in);
        Table out = lang::evaluate(*node.transform, inputs);
        out.schema = node.declared_output;

        // step 3: contract conformance, minus provably redundant checks
        std::set<std::string> skip_cols;
        for (const auto& c : node.declared_output.columns)
          if (skips.count({node.name, c.name, "notnull"}))
            skip_cols.insert(c.name);
        ConformanceReport rep =
            validate_data(out, node.declared_output, skip_cols);
        if (!rep.conformant()) {
          failure = "contract violation: " + rep.summary();
        } else {
          Commit c = repo_.write_table(rec.txn_branch, node.name, out,
                                       repo_.resolve_ref(rec.txn_branch));
          rec.node_results.push_back({node.name, "ok", c.id, ""});
        }
      } catch (const Error& e) {
        failure = e.what();
      }
    }
    if (!failure.empty()) {
      rec.node_results.push_back({node.name, "failed", {}, failure});
      rec.diagnostics.push_back("node " + node.name + ": " + failure);
      abort_run(rec, base);
      return rec;
    }
  }

  hook("pre-publish");
  if (opts.fail_before_publish) {
    rec.diagnostics.push_back("injected failure before publish");
    abort_run(rec, base);
    return rec;
  }

  // step 4: publish atomically or not at all
  MergePolicy policy;
  policy.allow_from_aborted =
      opts.allow_merge_from_aborted || !resumed_from.empty();
  for (int attempt = 0;; ++attempt) {
    CommitId head = repo_.resolve_ref(target);
    MergeResult res;
    try {
      res = merge(repo_, rec.txn_branch, target, head, policy);
    } catch (const Error& e) {
      if (e.code() == Errc::CasConflict && attempt < 16) continue;
      rec.diagnostics.push_back(std::string("publish failed: ") + e.what());
      abort_run(rec, base);
      return rec;
    }
    if (!res.ok()) {
      std::string tables;
      for (const auto& t : res.conflicts)
        tables += (tables.empty() ? "" : ", ") + t;
      rec.diagnostics.push_back("merge conflict on: " + tables);
      abort_run(rec, base);
      return rec;
    }
    rec.publish_commit =
        res.kind == MergeKind::NoOp ? head : res.merge_commit;
    break;
  }
  repo_.delete_branch(rec.txn_branch);
  rec.status = RunStatus::Committed;
  rec.finished_at = repo_.now();
  persist(rec);
  hook("published");
  return rec;
}

RunRecord RunEngine::run(const std::string& manifest_path,
                         const std::string& target, const RunOptions& opts) {
  std::string text = read_file(manifest_path);
  return run_text(text, manifest_path, target, opts);
}

RunRecord RunEngine::run_text(const std::string& manifest_text,
                              const std::string& manifest_name,
                              const std::string& target,
                              const RunOptions& opts) {
  PipelinePlan plan;
  try {
    plan = parse_manifest(manifest_text, manifest_name);
  } catch (const Error& e) {
    // rejected before any branch exists; still registered for inspection
    RunRecord rec;
    rec.run_id = new_run_id();
    rec.target_branch = target;
    rec.status = RunStatus::Rejected;
    rec.diagnostics.push_back(e.what());
    rec.finished_at = repo_.now();
    persist(rec);
    return rec;
  }
  return execute(plan, manifest_text, target, opts, target, {}, "");
}

std::pair<Branch, RunRecord> RunEngine::reproduce(const std::string& run_id,
                                                  const std::string& new_branch) {
  RunRecord orig = get_run(run_id);
  std::optional<std::string> text = repo_.fetch_bytes(orig.code_hash);
  if (!text)
    throw Error(Errc::CorruptObject,
                "archived manifest missing for run " + run_id);
  repo_.create_branch(new_branch, "commit:" + orig.start_commit.hex);
  PipelinePlan plan = parse_manifest(*text, "archived:" + run_id);
  RunOptions opts;
  opts.fail_at_node = orig.fail_at_node;  // replay the original fault too
  RunRecord rec = execute(plan, *text, new_branch, opts, new_branch, {}, "");
  return {repo_.branch(new_branch), rec};
}

RunRecord RunEngine::resume_from_aborted(const std::string& run_id,
                                         const std::string& fixed_manifest_path,
                                         const RunOptions& opts) {
  RunRecord orig = get_run(run_id);
  if (orig.status != RunStatus::Aborted)
    throw Error(Errc::UnknownRun, "run " + run_id + " is not aborted");
  if (!opts.allow_branch_from_aborted)
    throw Error(Errc::GuardrailDisabled,
                "resuming from an aborted branch requires "
                "allow_branch_from_aborted");

  std::optional<std::string> archived_text = repo_.fetch_bytes(orig.code_hash);
  if (!archived_text)
    throw Error(Errc::CorruptObject,
                "archived manifest missing for run " + run_id);
  PipelinePlan archived = parse_manifest(*archived_text, "archived:" + run_id);
  std::string fixed_text = read_file(fixed_manifest_path);
  PipelinePlan fixed = parse_manifest(fixed_text, fixed_manifest_path);

  std::string first_failed;
  for (const auto& r : orig.node_results)
    if (r.status == "failed") {
      first_failed = r.node;
      break;
    }
  if (first_failed.empty())
    throw Error(Errc::UnknownRun, "run " + run_id + " has no failed node");

  // idempotence precondition: everything upstream of the failure byte-equal
  std::set<std::string> upstream;
  std::function<void(const std::string&)> mark = [&](const std::string& n) {
    const NodeContract* node = archived.find_node(n);
    if (!node) return;
    for (const auto& in : node->inputs)
      if (!archived.is_source(in) && upstream.insert(in).second) mark(in);
  };
  mark(first_failed);
  for (const auto& up : upstream) {
    const NodeContract* a = archived.find_node(up);
    const NodeContract* f = fixed.find_node(up);
    if (!f || f->statement_text != a->statement_text ||
        !(f->declared_output == a->declared_output))
      throw Error(Errc::UpstreamManifestChanged,
                  "node " + up + " upstream of the failure changed");
  }

  // skip a node iff its output is already materialized on the aborted
  // branch by identical code and everything it reads was skipped too
  std::set<std::string> completed;
  for (const auto& r : orig.node_results)
    if (r.status == "ok") completed.insert(r.node);
  std::vector<std::string> skip_nodes;
  std::set<std::string> skipped;
  for (const auto& node : fixed.nodes) {
    if (!completed.count(node.name)) continue;
    const NodeContract* a = archived.find_node(node.name);
    if (!a || a->statement_text != node.statement_text) continue;
    bool inputs_ok = true;
    for (const auto& in : node.inputs)
      if (!fixed.is_source(in) && !skipped.count(in)) inputs_ok = false;
    if (!inputs_ok) continue;
    skip_nodes.push_back(node.name);
    skipped.insert(node.name);
  }

  return execute(fixed, fixed_text, orig.target_branch, opts, orig.txn_branch,
                 skip_nodes, run_id);
}

}  // namespace lakekit
