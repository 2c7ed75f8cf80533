#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "lakekit/catalog.hpp"

namespace lakekit {

struct TableDiff {
  std::set<std::string> added;
  std::set<std::string> removed;
  std::map<std::string, std::pair<SnapshotId, SnapshotId>> changed;  // old, new

  bool empty() const { return added.empty() && removed.empty() && changed.empty(); }
};

enum class MergeKind { FastForward, ThreeWay, NoOp };

const char* merge_kind_name(MergeKind k);

struct MergeResult {
  MergeKind kind = MergeKind::NoOp;
  CommitId merge_commit;               // destination head after success
  std::set<std::string> conflicts;     // nonempty only on failure
  bool ok() const { return conflicts.empty(); }
};

struct MergePolicy {
  bool allow_from_aborted = false;
};

/// Pure three-way classification over table-maps, the heart of the merge;
/// exhaustively cross-checked against a brute-force oracle in tests.
struct TableMapMerge {
  std::map<std::string, SnapshotId> merged;
  std::set<std::string> conflicts;
};
TableMapMerge merge_table_maps(const std::map<std::string, SnapshotId>& ancestor,
                               const std::map<std::string, SnapshotId>& dest,
                               const std::map<std::string, SnapshotId>& source);

bool is_ancestor(const Repository& repo, const CommitId& anc, const CommitId& desc);
std::set<std::string> ancestor_set(const Repository& repo, const CommitId& c);

/// Lowest common ancestor in the parent DAG; ties broken by smallest id.
CommitId common_ancestor(const Repository& repo, const CommitId& a, const CommitId& b);

TableDiff diff(const Repository& repo, const std::string& from, const std::string& to);

/// Fast-forward / three-way merge of `source` into branch `into`,
/// CAS-anchored at expected_head. Conflicts are returned (no commit
/// created, destination untouched); CAS races and guardrail violations
/// throw.
MergeResult merge(Repository& repo, const std::string& source,
                  const std::string& into, const CommitId& expected_head,
                  const MergePolicy& policy = {});

}  // namespace lakekit
