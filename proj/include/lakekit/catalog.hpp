#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lakekit/object_store.hpp"
#include "lakekit/schema.hpp"

namespace lakekit {

struct SnapshotId {
  std::string hex;
  auto operator<=>(const SnapshotId&) const = default;
};

struct CommitId {
  std::string hex;
  auto operator<=>(const CommitId&) const = default;
};

struct Commit {
  CommitId id;
  std::map<std::string, SnapshotId> tables;  // full table-map, no deltas
  std::vector<CommitId> parents;             // [] only for Init; [a,b] for merges
  std::string message;
  std::string author;
  int64_t timestamp = 0;
};

enum class BranchClass { Normal, Transactional, Aborted };

const char* branch_class_name(BranchClass c);

struct Branch {
  std::string name;
  CommitId head;
  BranchClass cls = BranchClass::Normal;
  CommitId created_from;
};

struct Tag {
  std::string name;
  CommitId target;
};

/// Stored form of one table version: schema plus a reference to the row
/// payload in the object store.
struct TableSnapshot {
  SnapshotId id;
  SchemaContract schema;
  std::string row_data;  // object-store key of the serialized rows
  uint64_t row_count = 0;
};

using Clock = std::function<int64_t()>;

/// File-backed versioned catalog: content-addressed commits/snapshots plus
/// named refs updated by compare-and-set. One process per root directory
/// (lock file); concurrent callers within the process are serialized per
/// ref update.
class Repository {
 public:
  static Repository init(const std::filesystem::path& root, Clock clock = {});
  static Repository open(const std::filesystem::path& root, Clock clock = {});

  Repository(Repository&&) noexcept;
  Repository& operator=(Repository&&) = delete;
  Repository(const Repository&) = delete;
  ~Repository();

  const std::filesystem::path& root() const { return root_; }

  // --- refs -----------------------------------------------------------
  CommitId resolve_ref(const std::string& spec) const;
  Branch branch(const std::string& name) const;
  bool branch_exists(const std::string& name) const;
  std::vector<Branch> list_branches() const;
  std::vector<Tag> list_tags() const;

  Branch create_branch(const std::string& name, const std::string& from,
                       BranchClass cls = BranchClass::Normal,
                       bool allow_from_aborted = false);
  void delete_branch(const std::string& name);
  Tag tag_commit(const std::string& name, const std::string& target);

  /// CAS head move; throws CasConflict when the observed head is stale.
  void set_branch_head(const std::string& name, const CommitId& expected,
                       const CommitId& next);
  void set_branch_class(const std::string& name, BranchClass cls);

  // --- commits and tables ---------------------------------------------
  Commit commit(const CommitId& id) const;

  /// Validates the snapshot against its own schema, stores payload +
  /// snapshot + commit, and CAS-advances the branch head. Upserts.
  Commit write_table(const std::string& branch, const std::string& table,
                     const ::lakekit::Table& data, const CommitId& expected_head);

  /// Create-only variant; errors with TableExists if present on the head.
  Commit create_table(const std::string& branch, const std::string& table,
                      const ::lakekit::Table& data, const CommitId& expected_head);

  /// Builds and stores a commit with an explicit table-map (merge commits).
  Commit store_commit(std::map<std::string, SnapshotId> tables,
                      std::vector<CommitId> parents, const std::string& message,
                      const std::string& author);

  ::lakekit::Table read_table(const std::string& ref, const std::string& table) const;
  TableSnapshot snapshot_meta(const std::string& ref, const std::string& table) const;
  TableSnapshot snapshot(const SnapshotId& id) const;
  ::lakekit::Table load_snapshot(const TableSnapshot& meta) const;
  SchemaContract table_schema(const std::string& ref, const std::string& table) const;

  std::vector<Commit> log(const std::string& ref, size_t limit = SIZE_MAX) const;

  // --- aborted-lineage registry ---------------------------------------
  void record_aborted_commits(const std::vector<CommitId>& ids);
  std::set<std::string> aborted_commits() const;

  // --- raw archive (manifest bytes etc.) ------------------------------
  std::string archive_bytes(std::string_view bytes);  // returns digest
  std::optional<std::string> fetch_bytes(const std::string& digest) const;

  // --- introspection ---------------------------------------------------
  uint64_t payload_reads() const { return payload_reads_.load(); }
  uint64_t object_writes() const { return store_->put_count(); }
  int64_t now() const { return clock_(); }

  /// Walks every ref down to Init: parents present, graph acyclic, objects
  /// verify, Init reachable from every head. Throws CorruptObject.
  void fsck() const;

 private:
  Repository(std::filesystem::path root, Clock clock, bool create);

  Commit advance(const std::string& branch, const std::string& table,
                 const ::lakekit::Table& data, const CommitId& expected_head,
                 bool create_only);
  std::string ref_path(const std::string& branch) const;
  Branch read_branch_file(const std::filesystem::path& p,
                          const std::string& name) const;
  void write_branch_file(const Branch& b);
  SnapshotId store_snapshot(const ::lakekit::Table& data);

  std::filesystem::path root_;
  Clock clock_;
  std::unique_ptr<ObjectStore> store_;
  mutable std::mutex ref_mutex_;
  mutable std::atomic<uint64_t> payload_reads_{0};
  int lock_fd_ = -1;
};

}  // namespace lakekit
