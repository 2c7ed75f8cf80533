#include "lakekit/merge.hpp"

#include <algorithm>
#include <deque>

#include "lakekit/errors.hpp"

namespace lakekit {

const char* merge_kind_name(MergeKind k) {
  switch (k) {
    case MergeKind::FastForward: return "fast_forward";
    case MergeKind::ThreeWay: return "three_way";
    case MergeKind::NoOp: return "no_op";
  }
  return "?";
}

TableMapMerge merge_table_maps(const std::map<std::string, SnapshotId>& ancestor,
                               const std::map<std::string, SnapshotId>& dest,
                               const std::map<std::string, SnapshotId>& source) {
  std::set<std::string> names;
  for (const auto& [t, _] : ancestor) names.insert(t);
  for (const auto& [t, _] : dest) names.insert(t);
  for (const auto& [t, _] : source) names.insert(t);

  auto entry = [](const std::map<std::string, SnapshotId>& m,
                  const std::string& t) -> std::optional<SnapshotId> {
    auto it = m.find(t);
    if (it == m.end()) return std::nullopt;
    return it->second;
  };

  TableMapMerge out;
  for (const auto& t : names) {
    auto a = entry(ancestor, t), d = entry(dest, t), s = entry(source, t);
    std::optional<SnapshotId> keep;
    if (d == s) keep = d;          // same change (or both absent)
    else if (d == a) keep = s;     // changed only on source
    else if (s == a) keep = d;     // changed only on dest
    else {
      out.conflicts.insert(t);     // diverged, including delete-vs-modify
      continue;
    }
    if (keep) out.merged[t] = *keep;
  }
  return out;
}

std::set<std::string> ancestor_set(const Repository& repo, const CommitId& c) {
  std::set<std::string> seen;
  std::deque<CommitId> work{c};
  while (!work.empty()) {
    CommitId id = work.front();
    work.pop_front();
    if (!seen.insert(id.hex).second) continue;
    for (const auto& p : repo.commit(id).parents) work.push_back(p);
  }
  return seen;
}

bool is_ancestor(const Repository& repo, const CommitId& anc, const CommitId& desc) {
  return ancestor_set(repo, desc).count(anc.hex) > 0;
}

CommitId common_ancestor(const Repository& repo, const CommitId& a, const CommitId& b) {
  std::set<std::string> sa = ancestor_set(repo, a);
  std::set<std::string> sb = ancestor_set(repo, b);
  std::set<std::string> common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                        std::inserter(common, common.begin()));
  // A commit is lowest when no other common ancestor descends from it.
  std::string best;
  for (const auto& c : common) {
    bool lowest = true;
    for (const auto& d : common) {
      if (d != c && is_ancestor(repo, CommitId{c}, CommitId{d})) {
        lowest = false;
        break;
      }
    }
    if (lowest && (best.empty() || c < best)) best = c;
  }
  return CommitId{best};
}

TableDiff diff(const Repository& repo, const std::string& from, const std::string& to) {
  Commit cf = repo.commit(repo.resolve_ref(from));
  Commit ct = repo.commit(repo.resolve_ref(to));
  TableDiff d;
  for (const auto& [t, s] : ct.tables) {
    auto it = cf.tables.find(t);
    if (it == cf.tables.end()) d.added.insert(t);
    else if (it->second != s) d.changed[t] = {it->second, s};
  }
  for (const auto& [t, s] : cf.tables)
    if (!ct.tables.count(t)) d.removed.insert(t);
  return d;
}

namespace {

/// Commits in source's ancestry that carry aborted lineage and are not
/// already part of the destination's history.
bool introduces_aborted_lineage(const Repository& repo, const CommitId& src,
                                const CommitId& dst) {
  std::set<std::string> tainted = repo.aborted_commits();
  if (tainted.empty()) return false;
  std::set<std::string> dst_anc = ancestor_set(repo, dst);
  for (const auto& c : ancestor_set(repo, src))
    if (tainted.count(c) && !dst_anc.count(c)) return true;
  return false;
}

}  // namespace

MergeResult merge(Repository& repo, const std::string& source,
                  const std::string& into, const CommitId& expected_head,
                  const MergePolicy& policy) {
  Branch dest = repo.branch(into);
  if (!policy.allow_from_aborted && repo.branch_exists(source) &&
      repo.branch(source).cls == BranchClass::Aborted)
    throw Error(Errc::AbortedSourceForbidden, "source branch '" + source + "' is aborted");

  CommitId src = repo.resolve_ref(source);
  if (!policy.allow_from_aborted &&
      introduces_aborted_lineage(repo, src, dest.head))
    throw Error(Errc::AbortedSourceForbidden,
                "source history includes commits from an aborted run");

  MergeResult res;
  if (src == dest.head) {
    res.kind = MergeKind::NoOp;
    res.merge_commit = dest.head;
    return res;
  }
  if (is_ancestor(repo, dest.head, src)) {
    repo.set_branch_head(into, expected_head, src);  // CAS; may throw
    res.kind = MergeKind::FastForward;
    res.merge_commit = src;
    return res;
  }
  if (is_ancestor(repo, src, dest.head)) {
    res.kind = MergeKind::NoOp;  // destination already contains source
    res.merge_commit = dest.head;
    return res;
  }

  CommitId base = common_ancestor(repo, dest.head, src);
  TableMapMerge tm = merge_table_maps(repo.commit(base).tables,
                                      repo.commit(dest.head).tables,
                                      repo.commit(src).tables);
  if (!tm.conflicts.empty()) {
    res.kind = MergeKind::ThreeWay;
    res.conflicts = tm.conflicts;
    return res;
  }
  Commit mc = repo.store_commit(tm.merged, {dest.head, src},
                                "merge " + source + " into " + into, "lakekit");
  repo.set_branch_head(into, expected_head, mc.id);
  res.kind = MergeKind::ThreeWay;
  res.merge_commit = mc.id;
  return res;
}

}  // namespace lakekit
