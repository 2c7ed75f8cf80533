#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "lakekit/errors.hpp"
#include "lakekit/model.hpp"
#include "test_util.hpp"

using namespace lakekit;
using namespace lakekit::model;
using test::TempDir;

namespace {

Bounds bounds(int tables, int snapshots, int commits, int branches, int runs,
              int steps) {
  Bounds b;
  b.max_tables = tables;
  b.max_snapshots = snapshots;
  b.max_commits = commits;
  b.max_branches = branches;
  b.max_runs = runs;
  b.max_steps = steps;
  return b;
}

std::vector<std::string> action_lines(const Trace& t) {
  std::vector<std::string> out;
  for (const auto& [a, s] : t.steps) out.push_back(to_string(a));
  return out;
}

// Independent naive enumerator: no fingerprint hashing; states compared
// by fully expanding every commit into its recursive structure.
std::string expand_commit(const ModelState& s, int c) {
  std::ostringstream os;
  os << "(";
  for (const auto& [t, sn] : s.commits[c].tables) os << t << ":" << sn << " ";
  if (s.tainted.count(c)) os << "!";
  std::vector<std::string> ps;
  for (int p : s.commits[c].parents) ps.push_back(expand_commit(s, p));
  std::sort(ps.begin(), ps.end());
  for (const auto& p : ps) os << p;
  os << ")";
  return os.str();
}

std::string naive_key(const ModelState& s) {
  std::ostringstream os;
  for (const auto& [name, b] : s.branches)
    os << "b " << name << " " << int(b.cls) << " " << expand_commit(s, b.head)
       << "\n";
  for (const auto& r : s.runs) {
    os << "r " << r.branch << " " << r.target << " ";
    for (int t : r.plan) os << t << ",";
    os << " " << r.idx << " " << int(r.phase) << " "
       << expand_commit(s, r.begin_commit) << "\n";
  }
  os << s.next_table << " " << s.next_snapshot << " " << s.branches_created;
  return os.str();
}

uint64_t naive_count(const Bounds& b, Guardrail g) {
  std::set<std::string> visited;
  std::vector<ModelState> frontier{initial_state()};
  visited.insert(naive_key(frontier[0]));
  for (int depth = 1; depth <= b.max_steps && !frontier.empty(); ++depth) {
    std::vector<ModelState> next;
    for (const auto& s : frontier)
      for (auto& [a, n] : successors(s, b, g))
        if (visited.insert(naive_key(n)).second) next.push_back(std::move(n));
    frontier = std::move(next);
  }
  return visited.size();
}

std::set<std::string> reachable_fingerprints(const Bounds& b, Guardrail g) {
  std::set<std::string> visited;
  std::vector<ModelState> frontier{initial_state()};
  visited.insert(frontier[0].fingerprint());
  for (int depth = 1; depth <= b.max_steps && !frontier.empty(); ++depth) {
    std::vector<ModelState> next;
    for (const auto& s : frontier)
      for (auto& [a, n] : successors(s, b, g))
        if (visited.insert(n.fingerprint()).second)
          next.push_back(std::move(n));
    frontier = std::move(next);
  }
  return visited;
}

}  // namespace

TEST_CASE("initial state shape") {
  ModelState s = initial_state();
  CHECK(s.commits.size() == 1);
  CHECK(s.commits[0].tables.empty());
  CHECK(s.commits[0].parents.empty());
  CHECK(s.branches.size() == 1);
  CHECK(s.branches.at("main").cls == BranchClass::Normal);
  CHECK(s.tainted.empty());
  CHECK(s.runs.empty());
}

TEST_CASE("bounds all one: hand-counted reachable set") {
  // commits already holds init, branches_created already counts main, so
  // every action is disabled and only Init is reachable
  EnumStats st = enumerate(bounds(1, 1, 1, 1, 1, 1), Guardrail::On);
  CHECK(st.states == 1);
  CHECK(st.transitions == 0);
  REQUIRE(st.frontier.size() == 1);
  CHECK(st.frontier[0] == 1);

  // allow one extra commit and one snapshot: exactly one action
  // (create_table main t1) is enabled from Init
  EnumStats st2 = enumerate(bounds(1, 1, 2, 1, 1, 1), Guardrail::On);
  CHECK(st2.states == 2);
  CHECK(st2.transitions == 1);
}

TEST_CASE("depth-one successors from init are the hand-derived set") {
  Bounds b = bounds(2, 2, 3, 3, 1, 4);
  auto succ = successors(initial_state(), b, Guardrail::On);
  std::vector<std::string> got;
  for (const auto& [a, s] : succ) got.push_back(to_string(a));
  std::vector<std::string> want = {"create_table main t1",
                                   "create_branch b1 main", "begin r1 main 1",
                                   "begin r1 main 2"};
  CHECK(got == want);

  // begin reserves the plan tables and creates the txn branch
  const ModelState& after = succ[3].second;
  CHECK(after.next_table == 2);
  CHECK(after.branches.at("txn_r1").cls == BranchClass::Transactional);
  CHECK(after.runs.size() == 1);
  CHECK(after.runs[0].plan == std::vector<int>{0, 1});
  CHECK(after.runs[0].idx == 0);
}

TEST_CASE("exhaustiveness: canonical count equals naive enumerator") {
  Bounds b = bounds(2, 2, 4, 2, 1, 6);
  for (Guardrail g : {Guardrail::On, Guardrail::Off}) {
    CAPTURE(int(g));
    EnumStats st = enumerate(b, g);
    CHECK(st.states == naive_count(b, g));
  }
}

TEST_CASE("exhaustiveness holds at a second scope") {
  Bounds b = bounds(2, 3, 5, 3, 2, 5);
  for (Guardrail g : {Guardrail::On, Guardrail::Off})
    CHECK(enumerate(b, g).states == naive_count(b, g));
}

TEST_CASE("policy monotonicity: guardrail-on reachable set is contained") {
  Bounds b = bounds(2, 2, 4, 3, 2, 6);
  auto on = reachable_fingerprints(b, Guardrail::On);
  auto off = reachable_fingerprints(b, Guardrail::Off);
  CHECK(on.size() <= off.size());
  CHECK(std::includes(off.begin(), off.end(), on.begin(), on.end()));
  CHECK(enumerate(b, Guardrail::On).states == on.size());
  CHECK(enumerate(b, Guardrail::Off).states == off.size());
}

TEST_CASE("enumeration is deterministic") {
  Bounds b = bounds(2, 2, 4, 3, 2, 6);
  EnumStats a = enumerate(b, Guardrail::Off);
  EnumStats c = enumerate(b, Guardrail::Off);
  CHECK(a.states == c.states);
  CHECK(a.transitions == c.transitions);
  CHECK(a.frontier == c.frontier);
}

TEST_CASE("bounds validation and state cap") {
  Bounds zero = bounds(0, 1, 1, 1, 1, 1);
  CHECK_THROWS_WITH_AS(enumerate(zero, Guardrail::On),
                       doctest::Contains("positive"), Error);
  Bounds capped = bounds(3, 3, 6, 4, 2, 8);
  capped.state_cap = 10;
  try {
    enumerate(capped, Guardrail::Off);
    FAIL("expected BoundsTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BoundsTooLarge);
  }
}

TEST_CASE("unknown invariant is rejected") {
  try {
    check("liveness", bounds(1, 1, 1, 1, 1, 1), Guardrail::On);
    FAIL("expected UnknownInvariant");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownInvariant);
  }
}

TEST_CASE("no_aborted_leak: counterexample with guardrail off, ok with on") {
  Bounds b = bounds(3, 3, 6, 4, 2, 8);

  CheckResult off = check("no_aborted_leak", b, Guardrail::Off);
  REQUIRE_FALSE(off.ok);
  REQUIRE(off.counterexample.has_value());
  // minimal shape is the paper's scenario: a run writes one table and
  // fails, a second actor branches off the dangling aborted branch and
  // merges the condemned work back into main
  auto lines = action_lines(*off.counterexample);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "begin r1 main 1");
  CHECK(lines[1] == "step r1");
  CHECK(lines[2] == "fail r1");
  CHECK(lines[3] == "create_branch b1 txn_r1");
  CHECK(lines[4] == "merge b1 main");
  CHECK(violation(off.counterexample->final_state(), "no_aborted_leak")
            .has_value());
  CHECK(off.violation.find("main") != std::string::npos);
  const ModelState& leaked = off.counterexample->final_state();
  bool main_leaks = false;
  for (int c : leaked.ancestry(leaked.branches.at("main").head))
    if (leaked.tainted.count(c)) main_leaks = true;
  CHECK(main_leaks);

  SUBCASE("minimality: no counterexample exists one level shallower") {
    Bounds shallow = b;
    shallow.max_steps = 4;
    CHECK(check("no_aborted_leak", shallow, Guardrail::Off).ok);
  }

  SUBCASE("guardrail on closes the leak") {
    CHECK(check("no_aborted_leak", b, Guardrail::On).ok);
    // specifically, the leaking merge itself is not enabled
    const ModelState& before = off.counterexample->steps[3].second;
    CHECK_FALSE(apply(before, off.counterexample->steps[4].first, b,
                      Guardrail::On)
                    .has_value());
  }
}

TEST_CASE("pipeline_atomicity: partial plan leaks only without guardrail") {
  Bounds b = bounds(3, 3, 6, 4, 2, 8);

  CheckResult off = check("pipeline_atomicity", b, Guardrail::Off);
  REQUIRE_FALSE(off.ok);
  auto lines = action_lines(*off.counterexample);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "begin r1 main 2");
  CHECK(lines[1] == "step r1");
  CHECK(lines[2] == "fail r1");
  CHECK(lines[3] == "create_branch b1 txn_r1");
  CHECK(off.violation.find("1 of 2") != std::string::npos);

  CHECK(check("pipeline_atomicity", b, Guardrail::On).ok);
}

TEST_CASE("merge_atomicity holds by construction under both policies") {
  Bounds b = bounds(2, 2, 5, 3, 1, 6);
  CHECK(check("merge_atomicity", b, Guardrail::On).ok);
  CHECK(check("merge_atomicity", b, Guardrail::Off).ok);
}

TEST_CASE("script round-trip") {
  Bounds b = bounds(3, 3, 6, 4, 2, 8);
  Trace t = *check("no_aborted_leak", b, Guardrail::Off).counterexample;
  std::string script = to_script(t);
  Trace back = from_script(script);
  CHECK(back.policy == t.policy);
  CHECK(action_lines(back) == action_lines(t));
  CHECK(back.final_state().fingerprint() == t.final_state().fingerprint());
  CHECK(to_script(back) == script);
}

TEST_CASE("script parsing rejects bad input") {
  CHECK_THROWS_AS(from_script(""), Error);
  CHECK_THROWS_WITH_AS(from_script("begin r1 main 1\n"),
                       doctest::Contains("policy"), Error);
  CHECK_THROWS_WITH_AS(from_script("policy guardrail_on\nstep r1\n"),
                       doctest::Contains("not enabled"), Error);
  CHECK_THROWS_WITH_AS(from_script("policy guardrail_on\nfly r1\n"),
                       doctest::Contains("unknown action"), Error);
  // guardrail gating is enforced during script validation too
  std::string leak =
      "policy guardrail_on\n"
      "begin r1 main 1\nstep r1\nfail r1\ncreate_branch b1 txn_r1\n";
  CHECK_THROWS_WITH_AS(from_script(leak), doctest::Contains("not enabled"),
                       Error);
  // comments and blank lines are fine
  Trace t = from_script("# leak scenario\npolicy guardrail_off\n\nbegin r1 main 1\n");
  CHECK(t.steps.size() == 1);
}

TEST_CASE("diagram names branches, commits and taint") {
  Bounds b = bounds(3, 3, 6, 4, 2, 8);
  Trace t = *check("no_aborted_leak", b, Guardrail::Off).counterexample;
  std::string d = render_diagram(t);
  CHECK(d.find("main") != std::string::npos);
  CHECK(d.find("txn_r1") != std::string::npos);
  CHECK(d.find("b1") != std::string::npos);
  CHECK(d.find("[aborted lineage]") != std::string::npos);
  CHECK(d.find("t1=s1") != std::string::npos);
}

TEST_CASE("replay: empty trace matches init") {
  TempDir dir;
  Trace t;
  t.policy = Guardrail::On;
  t.initial = initial_state();
  ReplayReport r = replay(t, dir.path / "r");
  CHECK(r.actions == 0);
  REQUIRE_FALSE(r.log.empty());
  CHECK(r.log.back().find("post-state verified") != std::string::npos);
}

TEST_CASE("replay: happy-path finish lands the whole plan on main") {
  TempDir dir;
  Trace t = from_script(
      "policy guardrail_on\n"
      "begin r1 main 2\nstep r1\nstep r1\nfinish r1\n");
  ReplayReport r = replay(t, dir.path / "r");
  CHECK(r.log.back().find("2 snapshots") != std::string::npos);
}

TEST_CASE("replay: the leak counterexample reproduces concretely") {
  TempDir dir;
  Bounds b = bounds(3, 3, 6, 4, 2, 8);
  Trace t = *check("no_aborted_leak", b, Guardrail::Off).counterexample;
  ReplayReport r = replay(t, dir.path / "r");
  CHECK(r.log.back().find("post-state verified") != std::string::npos);
  CHECK(violation(t.final_state(), "no_aborted_leak").has_value());
}

TEST_CASE("replay: concurrent work interleaved inside a run block") {
  TempDir dir;
  Trace t = from_script(
      "policy guardrail_on\n"
      "begin r1 main 2\n"
      "step r1\n"
      "create_branch b1 main\n"
      "create_table main t3\n"
      "step r1\n"
      "finish r1\n");
  ReplayReport r = replay(t, dir.path / "r");
  CHECK(r.log.back().find("post-state verified") != std::string::npos);
  // b1 was cut from main after one concurrent table, before the publish
  CHECK(violation(t.final_state(), "no_aborted_leak") == std::nullopt);
}

TEST_CASE("replay flags a tampered trace as divergence") {
  TempDir dir;
  Trace t = from_script(
      "policy guardrail_on\n"
      "begin r1 main 1\nstep r1\nfinish r1\n");
  // forge the abstract post-state: claim main ended up with no tables
  ModelState& fin = t.steps.back().second;
  fin.commits[fin.branches.at("main").head].tables.clear();
  try {
    replay(t, dir.path / "r");
    FAIL("expected Divergence");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Divergence);
  }
}

TEST_CASE("abstraction soundness: 1000 random traces replay cleanly") {
  TempDir dir;
  std::mt19937 rng(20240817);
  Bounds b = bounds(3, 3, 8, 4, 2, 10);

  auto random_trace = [&]() {
    Guardrail g = (rng() & 1) ? Guardrail::On : Guardrail::Off;
    Trace t;
    t.policy = g;
    t.initial = initial_state();
    ModelState cur = t.initial;
    int len = int(rng() % 9);
    for (int k = 0; k < len; ++k) {
      bool running = false;
      for (const auto& r : cur.runs)
        if (r.phase == RunPhase::Running) running = true;
      auto succ = successors(cur, b, g);
      std::vector<std::pair<Action, ModelState>> usable;
      for (auto& [a, n] : succ) {
        // replay maps one run onto one engine invocation, so traces stay
        // within the fragment where runs do not overlap
        if (a.kind == Action::Begin && running) continue;
        usable.emplace_back(a, std::move(n));
      }
      if (usable.empty()) break;
      auto& [a, n] = usable[rng() % usable.size()];
      t.steps.emplace_back(a, n);
      cur = std::move(n);
    }
    // close any open run so every begin has a terminal
    for (size_t i = 0; i < cur.runs.size(); ++i) {
      if (cur.runs[i].phase != RunPhase::Running) continue;
      Action a;
      a.run = int(i) + 1;
      a.kind = (cur.runs[i].idx == int(cur.runs[i].plan.size()) && (rng() & 1))
                   ? Action::Finish
                   : Action::Fail;
      cur = *apply(cur, a, b, g);
      t.steps.emplace_back(a, cur);
    }
    return t;
  };

  int divergences = 0;
  for (int i = 0; i < 1000; ++i) {
    Trace t = random_trace();
    try {
      replay(t, dir.path / ("r" + std::to_string(i)));
    } catch (const Error& e) {
      ++divergences;
      CAPTURE(to_script(t));
      CAPTURE(e.what());
      CHECK(divergences == 0);
      break;
    }
  }
  CHECK(divergences == 0);
}
