#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lakekit/catalog.hpp"
#include "lakekit/contracts.hpp"

namespace lakekit {

enum class RunStatus { Running, Committed, Aborted, Rejected };

const char* run_status_name(RunStatus s);

struct NodeOutcome {
  std::string node;
  std::string status;      // "ok" | "failed" | "skipped"
  CommitId commit;         // set for ok
  std::string diagnostic;  // set for failed
};

struct RunRecord {
  std::string run_id;
  std::string target_branch;
  CommitId start_commit;  // target head snapshotted at step 1
  std::string code_hash;  // digest of the archived manifest bytes
  std::string txn_branch;
  RunStatus status = RunStatus::Running;
  std::vector<NodeOutcome> node_results;
  std::vector<std::string> diagnostics;  // rejection or abort reasons
  CommitId publish_commit;               // target head after a commit
  int64_t finished_at = 0;
  std::optional<std::string> fail_at_node;  // recorded for reproduce
  std::string resumed_from;                 // run id, when a resume

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

struct RunOptions {
  std::optional<std::string> fail_at_node;  // fault injection, test-only
  bool fail_before_publish = false;         // crash between steps 3 and 4
  bool allow_branch_from_aborted = false;
  bool allow_merge_from_aborted = false;
  bool skip_redundant_checks = true;
  // observer invoked at protocol boundaries ("node:<name>", "pre-publish",
  // "published"); used by atomicity tests to interleave readers
  std::function<void(const std::string&)> step_hook;
};

/// Transactional pipeline execution over a Repository, plus the immutable
/// run registry persisted under <root>/runs.
class RunEngine {
 public:
  /// Opens the registry; orphaned running records from a crashed process
  /// are reclassified as aborted (their txn branches too).
  explicit RunEngine(Repository& repo);

  RunRecord run(const std::string& manifest_path, const std::string& target,
                const RunOptions& opts = {});
  RunRecord run_text(const std::string& manifest_text,
                     const std::string& manifest_name,
                     const std::string& target, const RunOptions& opts = {});

  RunRecord get_run(const std::string& run_id) const;
  std::vector<RunRecord> list_runs() const;

  /// Replays the archived manifest from the run's start commit on a fresh
  /// branch. Deterministic transforms make the outputs bit-identical.
  std::pair<Branch, RunRecord> reproduce(const std::string& run_id,
                                         const std::string& new_branch);

  /// Continues an aborted run from its materialized prefix, re-executing
  /// the failed node and everything downstream of it.
  RunRecord resume_from_aborted(const std::string& run_id,
                                const std::string& fixed_manifest_path,
                                const RunOptions& opts);

 private:
  RunRecord execute(const PipelinePlan& plan, const std::string& manifest_text,
                    const std::string& target, const RunOptions& opts,
                    const std::string& base_ref,
                    const std::vector<std::string>& skip_nodes,
                    const std::string& resumed_from);
  std::string new_run_id();
  void persist(const RunRecord& rec) const;
  void abort_run(RunRecord& rec, const CommitId& base);

  Repository& repo_;
  std::filesystem::path runs_dir_;
};

}  // namespace lakekit
