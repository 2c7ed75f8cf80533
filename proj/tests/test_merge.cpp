#include <doctest.h>

#include <random>
#include <thread>

#include "lakekit/merge.hpp"
#include "test_util.hpp"

using namespace lakekit;
using namespace lakekit::test;

namespace {

Repository make_repo(const TempDir& d) {
  return Repository::init(d.path / "repo", fixed_clock());
}

Commit write(Repository& r, const std::string& branch, const std::string& table,
             int64_t v) {
  return r.write_table(branch, table, int_table("v", {v}), r.resolve_ref(branch));
}

}  // namespace

TEST_CASE("common_ancestor: identity and linear chains") {
  TempDir d;
  auto repo = make_repo(d);
  CommitId init = repo.resolve_ref("main");
  Commit c1 = write(repo, "main", "a", 1);
  Commit c2 = write(repo, "main", "b", 2);
  CHECK(common_ancestor(repo, c2.id, c2.id) == c2.id);
  CHECK(common_ancestor(repo, c1.id, c2.id) == c1.id);
  CHECK(common_ancestor(repo, init, c2.id) == init);
}

TEST_CASE("common_ancestor: fork point") {
  TempDir d;
  auto repo = make_repo(d);
  Commit f = write(repo, "main", "a", 1);
  repo.create_branch("left", "main");
  repo.create_branch("right", "main");
  Commit l = write(repo, "left", "b", 2);
  Commit r = write(repo, "right", "c", 3);
  CHECK(common_ancestor(repo, l.id, r.id) == f.id);
}

TEST_CASE("common_ancestor matches brute force on random DAGs") {
  // Build random commit DAGs (<=12 commits incl. merges) and compare the
  // result against an oracle computed from raw ancestor-set intersection.
  std::mt19937 rng(7);
  for (int iter = 0; iter < 25; ++iter) {
    TempDir d;
    auto repo = make_repo(d);
    std::vector<CommitId> commits{repo.resolve_ref("main")};
    int n = 3 + static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) {
      size_t p = rng() % commits.size();
      if (rng() % 4 == 0 && commits.size() >= 2) {
        size_t q = rng() % commits.size();
        Commit m = repo.store_commit(repo.commit(commits[p]).tables,
                                     {commits[p], commits[q]}, "m", "t");
        commits.push_back(m.id);
      } else {
        auto tables = repo.commit(commits[p]).tables;
        Table t = int_table("v", {static_cast<int64_t>(iter * 100 + i)});
        repo.set_branch_head("main", repo.resolve_ref("main"), commits[p]);
        Commit c = repo.write_table("main", "t" + std::to_string(i % 3), t,
                                    commits[p]);
        commits.push_back(c.id);
      }
    }
    CommitId a = commits[rng() % commits.size()];
    CommitId b = commits[rng() % commits.size()];
    CommitId got = common_ancestor(repo, a, b);

    // Oracle: intersect ancestor sets, keep elements with no descendant in
    // the intersection, take the lexicographically smallest.
    auto sa = ancestor_set(repo, a);
    auto sb = ancestor_set(repo, b);
    std::set<std::string> common;
    for (const auto& c : sa)
      if (sb.count(c)) common.insert(c);
    std::string best;
    for (const auto& c : common) {
      bool lowest = true;
      for (const auto& e : common)
        if (e != c && is_ancestor(repo, CommitId{c}, CommitId{e})) lowest = false;
      if (lowest && (best.empty() || c < best)) best = c;
    }
    CHECK(got.hex == best);
  }
}

TEST_CASE("diff classifies added, removed, changed") {
  TempDir d;
  auto repo = make_repo(d);
  CHECK(diff(repo, "main", "main").empty());
  Commit c1 = write(repo, "main", "parent", 1);
  TableDiff d1 = diff(repo, "commit:" + c1.parents[0].hex, "main");
  CHECK(d1.added == std::set<std::string>{"parent"});
  Commit c2 = write(repo, "main", "parent", 2);
  TableDiff d2 = diff(repo, "commit:" + c1.id.hex, "main");
  REQUIRE(d2.changed.count("parent"));
  CHECK(d2.changed.at("parent").first == c1.tables.at("parent"));
  CHECK(d2.changed.at("parent").second == c2.tables.at("parent"));
  TableDiff d3 = diff(repo, "main", "commit:" + c1.parents[0].hex);
  CHECK(d3.removed == std::set<std::string>{"parent"});
}

TEST_CASE("merge: fast-forward moves head without a new commit") {
  TempDir d;
  auto repo = make_repo(d);
  repo.create_branch("feature", "main");
  write(repo, "feature", "a", 1);
  Commit tip = write(repo, "feature", "b", 2);
  size_t log_before = repo.log("feature").size();
  MergeResult r = merge(repo, "feature", "main", repo.resolve_ref("main"));
  CHECK(r.kind == MergeKind::FastForward);
  CHECK(repo.resolve_ref("main") == tip.id);
  CHECK(repo.log("main").size() == log_before);
}

TEST_CASE("merge: no_op when source equals destination") {
  TempDir d;
  auto repo = make_repo(d);
  repo.create_branch("same", "main");
  MergeResult r = merge(repo, "same", "main", repo.resolve_ref("main"));
  CHECK(r.kind == MergeKind::NoOp);
}

TEST_CASE("merge: three-way combines independent table changes") {
  TempDir d;
  auto repo = make_repo(d);
  write(repo, "main", "base", 0);
  repo.create_branch("feature", "main");
  Commit mc = write(repo, "main", "x", 1);
  Commit fc = write(repo, "feature", "y", 2);
  MergeResult r = merge(repo, "feature", "main", repo.resolve_ref("main"));
  CHECK(r.kind == MergeKind::ThreeWay);
  CHECK(r.ok());
  Commit merged = repo.commit(repo.resolve_ref("main"));
  REQUIRE(merged.parents.size() == 2);
  CHECK(merged.parents[0] == mc.id);
  CHECK(merged.parents[1] == fc.id);
  CHECK(merged.tables.count("x"));
  CHECK(merged.tables.count("y"));
}

TEST_CASE("merge: conflict leaves destination untouched, zero writes") {
  TempDir d;
  auto repo = make_repo(d);
  write(repo, "main", "parent", 0);
  repo.create_branch("feature", "main");
  write(repo, "main", "parent", 1);
  write(repo, "feature", "parent", 2);
  CommitId head = repo.resolve_ref("main");
  uint64_t writes = repo.object_writes();
  MergeResult r = merge(repo, "feature", "main", head);
  CHECK_FALSE(r.ok());
  CHECK(r.conflicts == std::set<std::string>{"parent"});
  CHECK(repo.resolve_ref("main") == head);
  CHECK(repo.object_writes() == writes);
}

TEST_CASE("merge refuses aborted sources without the policy flag") {
  TempDir d;
  auto repo = make_repo(d);
  repo.create_branch("dead", "main");
  write(repo, "dead", "t", 1);
  repo.set_branch_class("dead", BranchClass::Aborted);
  try {
    merge(repo, "dead", "main", repo.resolve_ref("main"));
    FAIL("expected AbortedSourceForbidden");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AbortedSourceForbidden);
  }
  MergeResult r = merge(repo, "dead", "main", repo.resolve_ref("main"),
                        MergePolicy{.allow_from_aborted = true});
  CHECK(r.kind == MergeKind::FastForward);
}

TEST_CASE("merge blocks commits whose lineage passed through an aborted run") {
  TempDir d;
  auto repo = make_repo(d);
  repo.create_branch("txn", "main", BranchClass::Transactional);
  Commit tainted = write(repo, "txn", "p", 1);
  repo.set_branch_class("txn", BranchClass::Aborted);
  repo.record_aborted_commits({tainted.id});
  // Second actor branches off the aborted work (explicitly allowed) and the
  // guardrail still blocks the merge back to main.
  repo.create_branch("agent", "txn", BranchClass::Normal, true);
  write(repo, "agent", "q", 2);
  try {
    merge(repo, "agent", "main", repo.resolve_ref("main"));
    FAIL("expected AbortedSourceForbidden");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AbortedSourceForbidden);
  }
}

TEST_CASE("merge atomicity: concurrent reader sees pre or post map only") {
  TempDir d;
  auto repo = make_repo(d);
  write(repo, "main", "a", 1);
  write(repo, "main", "b", 1);
  repo.create_branch("feature", "main");
  write(repo, "feature", "a", 2);
  write(repo, "feature", "b", 2);
  Commit pre = repo.commit(repo.resolve_ref("main"));
  Commit post = repo.commit(repo.resolve_ref("feature"));

  std::atomic<bool> stop{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!stop.load()) {
      Commit c = repo.commit(repo.resolve_ref("main"));
      if (!(c.tables == pre.tables || c.tables == post.tables)) bad.fetch_add(1);
    }
  });
  merge(repo, "feature", "main", pre.id);
  stop.store(true);
  reader.join();
  CHECK(bad.load() == 0);
  CHECK(repo.resolve_ref("main") == post.id);
}

TEST_CASE("table-map merge classification matches clean cases") {
  SnapshotId s1{"s1"}, s2{"s2"}, s3{"s3"};
  using M = std::map<std::string, SnapshotId>;
  // removed on one side, untouched on the other -> removed
  TableMapMerge r = merge_table_maps(M{{"t", s1}}, M{{"t", s1}}, M{});
  CHECK(r.conflicts.empty());
  CHECK(r.merged.empty());
  // removed vs modified -> conflict
  r = merge_table_maps(M{{"t", s1}}, M{{"t", s2}}, M{});
  CHECK(r.conflicts == std::set<std::string>{"t"});
  // both changed to the same snapshot -> keep it
  r = merge_table_maps(M{{"t", s1}}, M{{"t", s3}}, M{{"t", s3}});
  CHECK(r.merged == M{{"t", s3}});
}
