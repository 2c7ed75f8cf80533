#include "lakekit/model.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lakekit/errors.hpp"
#include "lakekit/merge.hpp"
#include "lakekit/object_store.hpp"
#include "lakekit/run.hpp"

namespace lakekit::model {

namespace {

std::string table_name(int id) { return "t" + std::to_string(id + 1); }
std::string run_name(int i) { return "r" + std::to_string(i + 1); }
std::string txn_name(int i) { return "txn_r" + std::to_string(i + 1); }
std::string next_branch_name(const ModelState& s) {
  return "b" + std::to_string(s.named_branches + 1);
}

}  // namespace

std::set<int> ModelState::ancestry(int commit) const {
  std::set<int> seen;
  std::vector<int> stack{commit};
  while (!stack.empty()) {
    int c = stack.back();
    stack.pop_back();
    if (!seen.insert(c).second) continue;
    for (int p : commits[c].parents) stack.push_back(p);
  }
  return seen;
}

std::string ModelState::fingerprint() const {
  // Parents always sit at lower indices, so one forward pass hashes
  // every commit sub-DAG.
  std::vector<std::string> memo(commits.size());
  for (size_t i = 0; i < commits.size(); ++i) {
    std::ostringstream os;
    os << "c";
    for (const auto& [t, sn] : commits[i].tables) os << " " << t << ":" << sn;
    if (tainted.count(int(i))) os << " !";
    std::vector<std::string> ps;
    for (int p : commits[i].parents) ps.push_back(memo[p]);
    std::sort(ps.begin(), ps.end());
    for (const auto& p : ps) os << " " << p;
    memo[i] = sha256_hex(os.str());
  }
  std::ostringstream os;
  for (const auto& [name, b] : branches)
    os << "b " << name << " " << int(b.cls) << " " << memo[b.head] << "\n";
  for (const auto& r : runs) {
    os << "r " << r.branch << " " << r.target << " ";
    for (int t : r.plan) os << t << ",";
    os << " " << r.idx << " " << int(r.phase) << " " << memo[r.begin_commit]
       << "\n";
  }
  os << next_table << " " << next_snapshot << " " << branches_created;
  return sha256_hex(os.str());
}

ModelState initial_state() {
  ModelState s;
  s.commits.push_back({});  // init commit: empty table-map, no parents
  s.branches["main"] = {0, BranchClass::Normal};
  return s;
}

std::optional<ModelState> apply(const ModelState& s, const Action& a,
                                const Bounds& b, Guardrail g) {
  auto branch = [&](const std::string& n) -> const ModelState::BranchRec* {
    auto it = s.branches.find(n);
    return it == s.branches.end() ? nullptr : &it->second;
  };
  switch (a.kind) {
    case Action::CreateTable: {
      // create-only, on a normal branch, always with a globally fresh
      // table name (the fragment replay stays within)
      const auto* br = branch(a.branch);
      if (!br || br->cls != BranchClass::Normal) return std::nullopt;
      if (a.table != s.next_table + 1) return std::nullopt;
      if (s.next_table >= b.max_tables || s.next_snapshot >= b.max_snapshots ||
          int(s.commits.size()) >= b.max_commits)
        return std::nullopt;
      ModelState n = s;
      auto c = n.commits[br->head];
      c.tables[n.next_table] = n.next_snapshot;
      c.parents = {br->head};
      n.commits.push_back(std::move(c));
      n.branches[a.branch].head = int(n.commits.size()) - 1;
      ++n.next_table;
      ++n.next_snapshot;
      return n;
    }
    case Action::CreateBranch: {
      const auto* src = branch(a.from);
      if (!src || src->cls == BranchClass::Transactional) return std::nullopt;
      if (src->cls == BranchClass::Aborted && g == Guardrail::On)
        return std::nullopt;
      if (a.branch != next_branch_name(s)) return std::nullopt;
      if (s.branches_created >= b.max_branches) return std::nullopt;
      ModelState n = s;
      n.branches[a.branch] = {src->head, BranchClass::Normal};
      ++n.branches_created;
      ++n.named_branches;
      return n;
    }
    case Action::Begin: {
      // create txn branch from the target's head, bind the run, idx = 0;
      // plan tables are reserved up front so steps never collide
      if (a.run != int(s.runs.size()) + 1) return std::nullopt;
      const auto* br = branch(a.branch);
      if (!br || br->cls != BranchClass::Normal) return std::nullopt;
      if (a.plan_len < 1 || s.next_table + a.plan_len > b.max_tables)
        return std::nullopt;
      if (int(s.runs.size()) >= b.max_runs) return std::nullopt;
      if (s.branches_created >= b.max_branches) return std::nullopt;
      ModelState n = s;
      ModelState::RunRec r;
      r.branch = txn_name(int(s.runs.size()));
      r.target = a.branch;
      for (int k = 0; k < a.plan_len; ++k) r.plan.push_back(n.next_table++);
      r.begin_commit = br->head;
      n.branches[r.branch] = {br->head, BranchClass::Transactional};
      ++n.branches_created;
      n.runs.push_back(std::move(r));
      return n;
    }
    case Action::Step: {
      if (a.run < 1 || a.run > int(s.runs.size())) return std::nullopt;
      const auto& r = s.runs[a.run - 1];
      if (r.phase != RunPhase::Running || r.idx >= int(r.plan.size()))
        return std::nullopt;
      if (s.next_snapshot >= b.max_snapshots ||
          int(s.commits.size()) >= b.max_commits)
        return std::nullopt;
      ModelState n = s;
      int head = s.branches.at(r.branch).head;
      auto c = n.commits[head];
      c.tables[r.plan[r.idx]] = n.next_snapshot++;
      c.parents = {head};
      n.commits.push_back(std::move(c));
      n.branches[r.branch].head = int(n.commits.size()) - 1;
      ++n.runs[a.run - 1].idx;
      return n;
    }
    case Action::Fail: {
      if (a.run < 1 || a.run > int(s.runs.size())) return std::nullopt;
      if (s.runs[a.run - 1].phase != RunPhase::Running) return std::nullopt;
      ModelState n = s;
      auto& r = n.runs[a.run - 1];
      r.phase = RunPhase::Failed;
      auto& br = n.branches[r.branch];
      br.cls = BranchClass::Aborted;
      // condemn everything the run wrote; the txn branch is linear
      for (int c = br.head; c != r.begin_commit;
           c = *n.commits[c].parents.begin())
        n.tainted.insert(c);
      return n;
    }
    case Action::Finish: {
      if (a.run < 1 || a.run > int(s.runs.size())) return std::nullopt;
      const auto& r0 = s.runs[a.run - 1];
      if (r0.phase != RunPhase::Running || r0.idx != int(r0.plan.size()))
        return std::nullopt;
      ModelState n = s;
      auto& r = n.runs[a.run - 1];
      int src = n.branches.at(r.branch).head;
      auto& dst = n.branches.at(r.target);
      if (n.ancestry(src).count(dst.head)) {
        dst.head = src;  // fast-forward
      } else {
        // plan tables are fresh, so a three-way merge cannot conflict
        if (int(n.commits.size()) >= b.max_commits) return std::nullopt;
        ModelState::CommitRec m;
        m.tables = n.commits[dst.head].tables;
        for (const auto& [t, sn] : n.commits[src].tables) m.tables[t] = sn;
        m.parents = {dst.head, src};
        n.commits.push_back(std::move(m));
        dst.head = int(n.commits.size()) - 1;
      }
      n.branches.erase(r.branch);
      r.phase = RunPhase::Finished;
      return n;
    }
    case Action::Merge: {
      const auto* src = branch(a.branch);
      const auto* dst = branch(a.from);
      if (!src || !dst || a.branch == a.from) return std::nullopt;
      if (src->cls != BranchClass::Normal || dst->cls != BranchClass::Normal)
        return std::nullopt;
      auto dst_anc = s.ancestry(dst->head);
      if (dst_anc.count(src->head)) return std::nullopt;  // no-op
      if (g == Guardrail::On) {
        // mirror of introduces_aborted_lineage in the merge engine
        for (int c : s.ancestry(src->head))
          if (s.tainted.count(c) && !dst_anc.count(c)) return std::nullopt;
      }
      ModelState n = s;
      if (s.ancestry(src->head).count(dst->head)) {
        n.branches[a.from].head = src->head;
      } else {
        if (int(s.commits.size()) >= b.max_commits) return std::nullopt;
        ModelState::CommitRec m;
        m.tables = s.commits[dst->head].tables;
        for (const auto& [t, sn] : s.commits[src->head].tables)
          m.tables[t] = sn;
        m.parents = {dst->head, src->head};
        n.commits.push_back(std::move(m));
        n.branches[a.from].head = int(n.commits.size()) - 1;
      }
      return n;
    }
  }
  return std::nullopt;
}

std::vector<std::pair<Action, ModelState>> successors(const ModelState& s,
                                                      const Bounds& b,
                                                      Guardrail g) {
  std::vector<std::pair<Action, ModelState>> out;
  auto try_add = [&](const Action& a) {
    if (auto n = apply(s, a, b, g)) out.emplace_back(a, std::move(*n));
  };
  for (const auto& [name, br] : s.branches) {
    Action a;
    a.kind = Action::CreateTable;
    a.branch = name;
    a.table = s.next_table + 1;
    try_add(a);
  }
  for (const auto& [name, br] : s.branches) {
    Action a;
    a.kind = Action::CreateBranch;
    a.branch = next_branch_name(s);
    a.from = name;
    try_add(a);
  }
  for (const auto& [name, br] : s.branches)
    for (int k = 1; s.next_table + k <= b.max_tables; ++k) {
      Action a;
      a.kind = Action::Begin;
      a.run = int(s.runs.size()) + 1;
      a.branch = name;
      a.plan_len = k;
      try_add(a);
    }
  for (int i = 1; i <= int(s.runs.size()); ++i)
    for (auto kind : {Action::Step, Action::Fail, Action::Finish}) {
      Action a;
      a.kind = kind;
      a.run = i;
      try_add(a);
    }
  for (const auto& [sn, sb] : s.branches)
    for (const auto& [dn, db] : s.branches) {
      Action a;
      a.kind = Action::Merge;
      a.branch = sn;
      a.from = dn;
      try_add(a);
    }
  return out;
}

std::string to_string(const Action& a) {
  switch (a.kind) {
    case Action::CreateTable:
      return "create_table " + a.branch + " " + table_name(a.table - 1);
    case Action::CreateBranch:
      return "create_branch " + a.branch + " " + a.from;
    case Action::Begin:
      return "begin " + run_name(a.run - 1) + " " + a.branch + " " +
             std::to_string(a.plan_len);
    case Action::Step:
      return "step " + run_name(a.run - 1);
    case Action::Fail:
      return "fail " + run_name(a.run - 1);
    case Action::Finish:
      return "finish " + run_name(a.run - 1);
    case Action::Merge:
      return "merge " + a.branch + " " + a.from;
  }
  return "";
}

namespace {

int parse_numbered(const std::string& word, char prefix,
                   const std::string& line) {
  if (word.size() < 2 || word[0] != prefix)
    throw Error(Errc::SyntaxError, "bad name '" + word + "' in: " + line);
  try {
    return std::stoi(word.substr(1));
  } catch (...) {
    throw Error(Errc::SyntaxError, "bad name '" + word + "' in: " + line);
  }
}

}  // namespace

Action parse_action(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> w;
  std::string part;
  while (in >> part) w.push_back(part);
  if (w.empty()) throw Error(Errc::SyntaxError, "empty action line");
  Action a;
  auto need = [&](size_t n) {
    if (w.size() != n)
      throw Error(Errc::SyntaxError, "malformed action: " + line);
  };
  if (w[0] == "create_table") {
    need(3);
    a.kind = Action::CreateTable;
    a.branch = w[1];
    a.table = parse_numbered(w[2], 't', line);
  } else if (w[0] == "create_branch") {
    need(3);
    a.kind = Action::CreateBranch;
    a.branch = w[1];
    a.from = w[2];
  } else if (w[0] == "begin") {
    need(4);
    a.kind = Action::Begin;
    a.run = parse_numbered(w[1], 'r', line);
    a.branch = w[2];
    a.plan_len = parse_numbered("r" + w[3], 'r', line);
  } else if (w[0] == "step" || w[0] == "fail" || w[0] == "finish") {
    need(2);
    a.kind = w[0] == "step"   ? Action::Step
             : w[0] == "fail" ? Action::Fail
                              : Action::Finish;
    a.run = parse_numbered(w[1], 'r', line);
  } else if (w[0] == "merge") {
    need(3);
    a.kind = Action::Merge;
    a.branch = w[1];
    a.from = w[2];
  } else {
    throw Error(Errc::SyntaxError, "unknown action: " + line);
  }
  return a;
}

EnumStats enumerate(const Bounds& b, Guardrail g) {
  if (b.max_tables < 1 || b.max_snapshots < 1 || b.max_commits < 1 ||
      b.max_branches < 1 || b.max_runs < 1 || b.max_steps < 1)
    throw Error(Errc::BoundsTooLarge, "bounds must be positive");
  EnumStats stats;
  std::unordered_set<std::string> visited;
  std::vector<ModelState> frontier{initial_state()};
  visited.insert(frontier[0].fingerprint());
  stats.frontier.push_back(1);
  for (int depth = 1; depth <= b.max_steps && !frontier.empty(); ++depth) {
    std::vector<ModelState> next;
    for (const auto& s : frontier)
      for (auto& [a, n] : successors(s, b, g)) {
        ++stats.transitions;
        if (visited.insert(n.fingerprint()).second) {
          if (visited.size() > b.state_cap)
            throw Error(Errc::BoundsTooLarge,
                        "state cap " + std::to_string(b.state_cap) +
                            " exceeded");
          next.push_back(std::move(n));
        }
      }
    if (!next.empty()) stats.frontier.push_back(next.size());
    frontier = std::move(next);
  }
  stats.states = visited.size();
  return stats;
}

std::optional<std::string> violation(const ModelState& s,
                                     const std::string& invariant) {
  if (invariant == "merge_atomicity") {
    // heads change only via single transitions; the transition system
    // cannot represent a violation, so checking it documents the property
    return std::nullopt;
  }
  if (invariant == "no_aborted_leak") {
    // scoped to main, the production branch the paper's counterexample
    // corrupts; private branches may hold aborted lineage for triage
    for (int c : s.ancestry(s.branches.at("main").head))
      if (s.tainted.count(c))
        return "commit from an aborted run is reachable from main";
    return std::nullopt;
  }
  if (invariant == "pipeline_atomicity") {
    for (size_t i = 0; i < s.runs.size(); ++i) {
      const auto& r = s.runs[i];
      if (r.phase == RunPhase::Running) continue;
      for (const auto& [name, br] : s.branches) {
        if (br.cls != BranchClass::Normal) continue;
        const auto& tabs = s.commits[br.head].tables;
        int present = 0;
        for (int t : r.plan) present += tabs.count(t) ? 1 : 0;
        if (present > 0 && present < int(r.plan.size()))
          return "branch '" + name + "' holds " + std::to_string(present) +
                 " of " + std::to_string(r.plan.size()) + " tables from " +
                 run_name(int(i)) + "'s plan";
      }
    }
    return std::nullopt;
  }
  throw Error(Errc::UnknownInvariant, invariant);
}

CheckResult check(const std::string& invariant, const Bounds& b, Guardrail g) {
  if (invariant != "merge_atomicity" && invariant != "no_aborted_leak" &&
      invariant != "pipeline_atomicity")
    throw Error(Errc::UnknownInvariant, invariant);
  if (b.max_tables < 1 || b.max_snapshots < 1 || b.max_commits < 1 ||
      b.max_branches < 1 || b.max_runs < 1 || b.max_steps < 1)
    throw Error(Errc::BoundsTooLarge, "bounds must be positive");

  CheckResult res;
  struct Pred {
    std::string parent;
    Action action;
  };
  std::unordered_map<std::string, Pred> pred;
  std::unordered_set<std::string> visited;

  ModelState init = initial_state();
  std::string init_fp = init.fingerprint();
  visited.insert(init_fp);
  res.stats.frontier.push_back(1);

  auto build_trace = [&](const std::string& fp) {
    std::vector<Action> actions;
    for (std::string cur = fp; cur != init_fp;) {
      const Pred& p = pred.at(cur);
      actions.push_back(p.action);
      cur = p.parent;
    }
    std::reverse(actions.begin(), actions.end());
    Trace t;
    t.policy = g;
    t.initial = init;
    ModelState cur = init;
    for (const Action& a : actions) {
      cur = *apply(cur, a, b, g);
      t.steps.emplace_back(a, cur);
    }
    return t;
  };

  if (auto v = violation(init, invariant)) {
    res.ok = false;
    res.violation = *v;
    res.counterexample = Trace{g, init, {}};
    res.stats.states = 1;
    return res;
  }

  // init stays live: build_trace replays the action chain from it
  std::vector<ModelState> frontier{init};
  for (int depth = 1; depth <= b.max_steps && !frontier.empty(); ++depth) {
    std::vector<ModelState> next;
    for (const auto& s : frontier) {
      std::string sfp = s.fingerprint();
      for (auto& [a, n] : successors(s, b, g)) {
        ++res.stats.transitions;
        std::string fp = n.fingerprint();
        if (!visited.insert(fp).second) continue;
        if (visited.size() > b.state_cap)
          throw Error(Errc::BoundsTooLarge,
                      "state cap " + std::to_string(b.state_cap) +
                          " exceeded");
        pred[fp] = {sfp, a};
        if (auto v = violation(n, invariant)) {
          // BFS order makes this a shortest counterexample
          res.ok = false;
          res.violation = *v;
          res.counterexample = build_trace(fp);
          res.stats.states = visited.size();
          return res;
        }
        next.push_back(std::move(n));
      }
    }
    if (!next.empty()) res.stats.frontier.push_back(next.size());
    frontier = std::move(next);
  }
  res.stats.states = visited.size();
  return res;
}

std::string to_script(const Trace& t) {
  std::ostringstream os;
  os << "policy "
     << (t.policy == Guardrail::On ? "guardrail_on" : "guardrail_off") << "\n";
  for (const auto& [a, s] : t.steps) os << to_string(a) << "\n";
  return os.str();
}

Trace from_script(const std::string& script) {
  // semantic preconditions still apply, but resource caps do not: a
  // script is replayed against whatever scope produced it
  Bounds loose;
  loose.max_tables = loose.max_snapshots = loose.max_commits =
      loose.max_branches = loose.max_runs = loose.max_steps = 1'000'000'000;

  Trace t;
  bool have_policy = false;
  ModelState cur;
  std::istringstream in(script);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string trimmed = line;
    auto pos = trimmed.find('#');
    if (pos != std::string::npos) trimmed.resize(pos);
    while (!trimmed.empty() && isspace((unsigned char)trimmed.back()))
      trimmed.pop_back();
    while (!trimmed.empty() && isspace((unsigned char)trimmed.front()))
      trimmed.erase(trimmed.begin());
    if (trimmed.empty()) continue;
    if (!have_policy) {
      if (trimmed == "policy guardrail_on")
        t.policy = Guardrail::On;
      else if (trimmed == "policy guardrail_off")
        t.policy = Guardrail::Off;
      else
        throw Error(Errc::SyntaxError,
                    "line " + std::to_string(lineno) +
                        ": expected policy header, got: " + trimmed);
      have_policy = true;
      t.initial = initial_state();
      cur = t.initial;
      continue;
    }
    Action a = parse_action(trimmed);
    auto n = apply(cur, a, loose, t.policy);
    if (!n)
      throw Error(Errc::SyntaxError, "line " + std::to_string(lineno) +
                                         ": action not enabled: " + trimmed);
    cur = *n;
    t.steps.emplace_back(a, cur);
  }
  if (!have_policy)
    throw Error(Errc::SyntaxError, "script is missing a policy header");
  return t;
}

std::string render_diagram(const Trace& t) {
  const ModelState& s = t.final_state();
  std::ostringstream os;
  os << "commits\n";
  for (size_t i = 0; i < s.commits.size(); ++i) {
    os << "  c" << i << " {";
    bool first = true;
    for (const auto& [tab, sn] : s.commits[i].tables) {
      os << (first ? "" : " ") << table_name(tab) << "=s" << sn + 1;
      first = false;
    }
    os << "}";
    if (!s.commits[i].parents.empty()) {
      os << " <-";
      for (int p : s.commits[i].parents) os << " c" << p;
    }
    if (s.tainted.count(int(i))) os << "  [aborted lineage]";
    os << "\n";
  }
  os << "branches\n";
  for (const auto& [name, br] : s.branches)
    os << "  " << name << " -> c" << br.head << " ("
       << branch_class_name(br.cls) << ")\n";
  if (!s.runs.empty()) {
    os << "runs\n";
    for (size_t i = 0; i < s.runs.size(); ++i) {
      const auto& r = s.runs[i];
      os << "  " << run_name(int(i)) << " on " << r.target << ": plan [";
      for (size_t k = 0; k < r.plan.size(); ++k)
        os << (k ? " " : "") << table_name(r.plan[k]);
      os << "] idx " << r.idx << " "
         << (r.phase == RunPhase::Running    ? "running"
             : r.phase == RunPhase::Failed   ? "failed"
                                             : "finished")
         << "\n";
    }
  }
  return os.str();
}

namespace {

Table one_row_table(const std::string& schema_name, int64_t v) {
  Table t;
  t.schema.name = schema_name;
  t.schema.columns = {{"v", {BaseType::Int64, false}, {}}};
  t.rows = {{Value(v)}};
  return t;
}

// Synthesized pipeline: every plan node reads the seed source and emits
// one row whose payload is the table number, so snapshots are pairwise
// distinct and content addressing maps them bijectively.
std::string manifest_for(const std::vector<int>& plan) {
  std::ostringstream os;
  os << "schema Seed { v: int64 }\n";
  for (int t : plan) os << "schema S" << t + 1 << " { v: int64 }\n";
  os << "\nsource seed_model: Seed\n";
  for (int t : plan) {
    os << "\n-- " << table_name(t) << ": S" << t + 1 << " <- seed_model\n";
    os << "select " << t + 1 << " as v from seed_model\n";
  }
  return os.str();
}

[[noreturn]] void diverge(size_t step, const std::string& expected,
                          const std::string& actual) {
  throw Error(Errc::Divergence, "step " + std::to_string(step) +
                                    ": expected " + expected + ", actual " +
                                    actual);
}

}  // namespace

ReplayReport replay(const Trace& t, const std::filesystem::path& scratch) {
  ReplayReport report;
  Repository repo = Repository::init(scratch, [] { return int64_t(1700000000); });
  RunEngine engine(repo);
  bool allow = t.policy == Guardrail::Off;

  // the model's tables are fresh-only, so a constant seed table gives
  // every synthesized pipeline an input without entering the model
  repo.write_table("main", "seed_model", one_row_table("Seed", 0),
                   repo.resolve_ref("main"));

  // model branch name -> concrete branch name (txn branches get the
  // engine's generated names)
  std::map<std::string, std::string> cname{{"main", "main"}};

  std::vector<Action> actions;
  for (const auto& [a, s] : t.steps) actions.push_back(a);

  size_t i = 0;
  while (i < actions.size()) {
    const Action& a = actions[i];
    switch (a.kind) {
      case Action::CreateTable: {
        repo.create_table(cname.at(a.branch), table_name(a.table - 1),
                          one_row_table("S" + std::to_string(a.table), a.table),
                          repo.resolve_ref(cname.at(a.branch)));
        report.log.push_back(to_string(a));
        ++report.actions;
        ++i;
        break;
      }
      case Action::CreateBranch: {
        repo.create_branch(a.branch, cname.at(a.from), BranchClass::Normal,
                           allow);
        cname[a.branch] = a.branch;
        report.log.push_back(to_string(a));
        ++report.actions;
        ++i;
        break;
      }
      case Action::Merge: {
        MergePolicy policy;
        policy.allow_from_aborted = allow;
        MergeResult res =
            merge(repo, cname.at(a.branch), cname.at(a.from),
                  repo.branch(cname.at(a.from)).head, policy);
        if (!res.ok())
          diverge(i + 1, "clean merge", "conflicts");
        report.log.push_back(to_string(a));
        ++report.actions;
        ++i;
        break;
      }
      case Action::Begin: {
        // map the whole begin..fail/finish block onto one engine run;
        // actions interleaved inside it execute from the step hook
        const ModelState& after_begin = t.steps[i].second;
        const ModelState::RunRec rec_model = after_begin.runs[a.run - 1];
        size_t j = i + 1;
        int steps_done = 0;
        struct Interposed {
          int tag;  // run steps completed before this action
          Action action;
        };
        std::vector<Interposed> inner;
        std::optional<Action::Kind> terminal;
        for (; j < actions.size(); ++j) {
          const Action& x = actions[j];
          bool mine = (x.kind == Action::Step || x.kind == Action::Fail ||
                       x.kind == Action::Finish) &&
                      x.run == a.run;
          if (mine) {
            if (x.kind == Action::Step) {
              ++steps_done;
            } else {
              terminal = x.kind;
              break;
            }
          } else if (x.kind == Action::Begin || x.kind == Action::Step ||
                     x.kind == Action::Fail || x.kind == Action::Finish) {
            throw Error(Errc::Divergence,
                        "overlapping runs are outside the replayable "
                        "fragment: " +
                            to_string(x));
          } else {
            inner.push_back({steps_done, x});
          }
        }
        if (!terminal)
          throw Error(Errc::Divergence,
                      "run " + run_name(a.run - 1) +
                          " has no fail/finish in the trace");

        int plan_len = int(rec_model.plan.size());
        RunOptions opts;
        opts.allow_branch_from_aborted = allow;
        opts.allow_merge_from_aborted = allow;
        if (*terminal == Action::Fail) {
          if (steps_done == plan_len)
            opts.fail_before_publish = true;
          else
            opts.fail_at_node = table_name(rec_model.plan[steps_done]);
        }
        size_t inner_done = 0;
        opts.step_hook = [&](const std::string& stage) {
          int tag = -1;
          if (stage == "pre-publish") {
            tag = plan_len;
          } else if (stage.rfind("node:", 0) == 0) {
            std::string node = stage.substr(5);
            for (int k = 0; k < plan_len; ++k)
              if (table_name(rec_model.plan[k]) == node) tag = k;
          }
          if (tag < 0) return;
          for (; inner_done < inner.size() && inner[inner_done].tag <= tag;
               ++inner_done) {
            const Action& x = inner[inner_done].action;
            if (x.kind == Action::CreateTable) {
              repo.create_table(
                  cname.at(x.branch), table_name(x.table - 1),
                  one_row_table("S" + std::to_string(x.table), x.table),
                  repo.resolve_ref(cname.at(x.branch)));
            } else if (x.kind == Action::CreateBranch) {
              repo.create_branch(x.branch, cname.at(x.from),
                                 BranchClass::Normal, allow);
              cname[x.branch] = x.branch;
            } else {  // Merge
              MergePolicy policy;
              policy.allow_from_aborted = allow;
              merge(repo, cname.at(x.branch), cname.at(x.from),
                    repo.branch(cname.at(x.from)).head, policy);
            }
            report.log.push_back(to_string(x));
            ++report.actions;
          }
        };

        RunRecord rec = engine.run_text(manifest_for(rec_model.plan),
                                        "model_replay", cname.at(a.branch),
                                        opts);
        if (*terminal == Action::Fail && rec.status != RunStatus::Aborted)
          diverge(j + 1, "aborted run", run_status_name(rec.status));
        if (*terminal == Action::Finish && rec.status != RunStatus::Committed)
          diverge(j + 1,
                  "committed run",
                  std::string(run_status_name(rec.status)) +
                      (rec.diagnostics.empty() ? "" : ": " +
                                                          rec.diagnostics[0]));
        cname[rec_model.branch] = rec.txn_branch;
        if (inner_done != inner.size())
          throw Error(Errc::Divergence,
                      "interposed actions were not reached by the step hook");
        report.log.push_back(to_string(a) + " .. " +
                             to_string(actions[j]) + " (run " + rec.run_id +
                             ")");
        report.actions += 2 + steps_done;
        i = j + 1;
        break;
      }
      default:
        throw Error(Errc::Divergence,
                    "action has no concrete counterpart here: " +
                        to_string(a));
    }
  }

  // post-state bridge: every surviving abstract branch must match its
  // concrete branch in class and table-map shape, with a consistent
  // bijection between abstract and concrete snapshots
  const ModelState& fin = t.final_state();
  std::set<std::string> expect_names;
  for (const auto& [name, br] : fin.branches) expect_names.insert(cname.at(name));
  std::set<std::string> actual_names;
  for (const auto& br : repo.list_branches()) actual_names.insert(br.name);
  if (expect_names != actual_names) {
    std::string e, c;
    for (const auto& n : expect_names) e += n + " ";
    for (const auto& n : actual_names) c += n + " ";
    diverge(actions.size(), "branches {" + e + "}", "branches {" + c + "}");
  }

  std::map<int, std::string> snap_fwd;
  std::map<std::string, int> snap_rev;
  for (const auto& [name, br] : fin.branches) {
    Branch concrete = repo.branch(cname.at(name));
    if (concrete.cls != br.cls)
      diverge(actions.size(), "branch " + name + " class " +
                                  branch_class_name(br.cls),
              branch_class_name(concrete.cls));
    auto tables = repo.commit(concrete.head).tables;
    tables.erase("seed_model");
    const auto& model_tables = fin.commits[br.head].tables;
    if (tables.size() != model_tables.size())
      diverge(actions.size(),
              "branch " + name + " with " +
                  std::to_string(model_tables.size()) + " tables",
              std::to_string(tables.size()) + " tables");
    for (const auto& [tab, sn] : model_tables) {
      auto it = tables.find(table_name(tab));
      if (it == tables.end())
        diverge(actions.size(), "table " + table_name(tab) + " on " + name,
                "absent");
      auto f = snap_fwd.find(sn);
      if (f != snap_fwd.end() && f->second != it->second.hex)
        diverge(actions.size(), "snapshot s" + std::to_string(sn + 1) +
                                    " = " + f->second.substr(0, 12),
                it->second.hex.substr(0, 12));
      auto r = snap_rev.find(it->second.hex);
      if (r != snap_rev.end() && r->second != sn)
        diverge(actions.size(),
                "distinct snapshots for s" + std::to_string(sn + 1) +
                    " and s" + std::to_string(r->second + 1),
                "shared object " + it->second.hex.substr(0, 12));
      snap_fwd[sn] = it->second.hex;
      snap_rev[it->second.hex] = sn;
    }
  }
  report.log.push_back("post-state verified: " +
                       std::to_string(fin.branches.size()) + " branches, " +
                       std::to_string(snap_fwd.size()) + " snapshots");
  return report;
}

}  // namespace lakekit::model
