#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lakekit/catalog.hpp"

namespace lakekit::model {

/// Scope limits for exhaustive enumeration. Counts are totals over a
/// trace: max_commits includes the init commit, max_branches includes
/// main and transactional branches, max_steps bounds trace length.
struct Bounds {
  int max_tables = 2;
  int max_snapshots = 2;
  int max_commits = 4;
  int max_branches = 2;
  int max_runs = 1;
  int max_steps = 6;
  uint64_t state_cap = 10'000'000;
};

enum class Guardrail { On, Off };

enum class RunPhase { Running, Failed, Finished };

/// Abstract system state. Tables and snapshots are small integers
/// allocated in order; commits are index-based within one state and
/// identified structurally (content hash) across states, so states are
/// compared up to commit renaming.
struct ModelState {
  struct CommitRec {
    std::map<int, int> tables;  // table id -> snapshot id
    std::set<int> parents;      // commit indices
  };
  struct BranchRec {
    int head = 0;
    BranchClass cls = BranchClass::Normal;
  };
  struct RunRec {
    std::string branch;  // txn branch name
    std::string target;
    std::vector<int> plan;  // table ids, reserved at Begin
    int idx = 0;            // next plan position
    RunPhase phase = RunPhase::Running;
    int begin_commit = 0;
  };

  std::vector<CommitRec> commits;
  std::set<int> tainted;  // commit indices condemned by Fail
  std::map<std::string, BranchRec> branches;
  std::vector<RunRec> runs;  // creation order; run i is named r<i+1>
  int next_table = 0;
  int next_snapshot = 0;
  int branches_created = 1;  // all branches incl. main and txn, for bounds
  int named_branches = 0;    // user branches b1, b2, ... for naming

  std::set<int> ancestry(int commit) const;

  /// Canonical fingerprint: commit sub-DAGs hashed structurally, refs
  /// and runs serialized in a fixed order. Equal fingerprints identify
  /// states that differ only in commit creation order.
  std::string fingerprint() const;
};

struct Action {
  enum Kind { CreateTable, CreateBranch, Begin, Step, Fail, Finish, Merge };
  Kind kind = CreateTable;
  std::string branch;  // CreateTable/Begin target; CreateBranch name; Merge src
  std::string from;    // CreateBranch source; Merge destination
  int run = 0;         // 1-based run number for Begin/Step/Fail/Finish
  int plan_len = 0;    // Begin only
  int table = 0;       // 1-based table number for CreateTable
};

std::string to_string(const Action& a);
Action parse_action(const std::string& line);  // throws SyntaxError

struct Trace {
  Guardrail policy = Guardrail::On;
  ModelState initial;
  std::vector<std::pair<Action, ModelState>> steps;

  const ModelState& final_state() const {
    return steps.empty() ? initial : steps.back().second;
  }
};

ModelState initial_state();

/// One transition if the action is enabled in `s`, nullopt otherwise.
/// Bounds gate resource allocation; guardrail gates aborted lineage.
std::optional<ModelState> apply(const ModelState& s, const Action& a,
                                const Bounds& b, Guardrail g);

/// All enabled transitions, in a deterministic order.
std::vector<std::pair<Action, ModelState>> successors(const ModelState& s,
                                                      const Bounds& b,
                                                      Guardrail g);

struct EnumStats {
  uint64_t states = 0;       // distinct canonical states, incl. init
  uint64_t transitions = 0;  // edges explored
  std::vector<uint64_t> frontier;  // states first seen at each depth
};

/// Exhaustive BFS over canonicalized states. Deterministic for fixed
/// bounds and policy; throws BoundsTooLarge past bounds.state_cap.
EnumStats enumerate(const Bounds& b, Guardrail g);

/// Registered invariants: pipeline_atomicity, no_aborted_leak,
/// merge_atomicity. Returns a violation description or nullopt.
std::optional<std::string> violation(const ModelState& s,
                                     const std::string& invariant);

struct CheckResult {
  bool ok = true;
  std::optional<Trace> counterexample;  // shortest by action count (BFS)
  std::string violation;
  EnumStats stats;
};

CheckResult check(const std::string& invariant, const Bounds& b, Guardrail g);

// Line-oriented script form: `policy guardrail_on|guardrail_off` header,
// then one action per line. from_script revalidates enabledness.
std::string to_script(const Trace& t);
Trace from_script(const std::string& script);

/// Text commit-graph rendering of the trace's final state.
std::string render_diagram(const Trace& t);

struct ReplayReport {
  size_t actions = 0;
  std::vector<std::string> log;
};

/// Executes the trace against a fresh repository plus run engine under
/// `scratch` and asserts the abstract post-state matches the concrete
/// one branch by branch. Throws Divergence on mismatch; this is the
/// bridge showing the model abstracts the implementation.
ReplayReport replay(const Trace& t, const std::filesystem::path& scratch);

}  // namespace lakekit::model
