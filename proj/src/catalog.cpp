#include "lakekit/catalog.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "lakekit/conformance.hpp"
#include "lakekit/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lakekit {

namespace {

constexpr const char* kFormatLine = "lakekit 1 sha256\n";

int64_t wall_clock() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool valid_ref_name(const std::string& name) {
  if (name.empty() || name.front() == '/' || name.back() == '/') return false;
  std::string segment;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.' ||
              c == '/';
    if (!ok) return false;
    if (c == '/') {
      if (segment.empty() || segment == "." || segment == "..") return false;
      segment.clear();
    } else {
      segment.push_back(c);
    }
  }
  return segment != "." && segment != ".." && !segment.empty();
}

BranchClass class_from_name(const std::string& s) {
  if (s == "normal") return BranchClass::Normal;
  if (s == "transactional") return BranchClass::Transactional;
  if (s == "aborted") return BranchClass::Aborted;
  throw Error(Errc::CorruptObject, "bad branch class '" + s + "'");
}

void atomic_write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  fs::path tmp = p.parent_path() / (p.filename().string() + ".tmp." +
                                    std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::optional<std::string> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json commit_to_json(const Commit& c) {
  json parents = json::array();
  for (const auto& p : c.parents) parents.push_back(p.hex);
  json tables = json::object();
  for (const auto& [t, s] : c.tables) tables[t] = s.hex;
  return json{{"kind", "commit"},    {"author", c.author},
              {"message", c.message}, {"parents", parents},
              {"tables", tables},     {"timestamp", c.timestamp}};
}

Commit commit_from_json(const json& j, const CommitId& id) {
  Commit c;
  c.id = id;
  c.author = j.at("author").get<std::string>();
  c.message = j.at("message").get<std::string>();
  c.timestamp = j.at("timestamp").get<int64_t>();
  for (const auto& p : j.at("parents")) c.parents.push_back({p.get<std::string>()});
  for (const auto& [t, s] : j.at("tables").items())
    c.tables[t] = SnapshotId{s.get<std::string>()};
  return c;
}

}  // namespace

const char* branch_class_name(BranchClass c) {
  switch (c) {
    case BranchClass::Normal: return "normal";
    case BranchClass::Transactional: return "transactional";
    case BranchClass::Aborted: return "aborted";
  }
  return "?";
}

Repository::Repository(fs::path root, Clock clock, bool create)
    : root_(std::move(root)), clock_(clock ? std::move(clock) : wall_clock) {
  if (create) {
    if (fs::exists(root_) && !fs::is_empty(root_))
      throw Error(Errc::AlreadyInitialized, root_.string());
    fs::create_directories(root_);
    atomic_write(root_ / "FORMAT", kFormatLine);
    fs::create_directories(root_ / "refs" / "branches");
    fs::create_directories(root_ / "refs" / "tags");
    fs::create_directories(root_ / "runs");
  } else {
    auto fmt = read_file(root_ / "FORMAT");
    if (!fmt) throw Error(Errc::UnknownRef, "not a lakekit repository: " + root_.string());
    if (*fmt != kFormatLine)
      throw Error(Errc::CorruptObject, "unsupported repo format: " + *fmt);
  }
  // Cross-process exclusion: one opener per root.
  fs::path lock = root_ / "LOCK";
  lock_fd_ = ::open(lock.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (lock_fd_ < 0)
    throw Error(Errc::RepoLocked, "repository locked: " + root_.string());
  std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] ssize_t n = ::write(lock_fd_, pid.data(), pid.size());
  store_ = std::make_unique<ObjectStore>(root_ / "objects");
}

Repository::Repository(Repository&& other) noexcept
    : root_(std::move(other.root_)),
      clock_(std::move(other.clock_)),
      store_(std::move(other.store_)),
      payload_reads_(other.payload_reads_.load()),
      lock_fd_(other.lock_fd_) {
  other.lock_fd_ = -1;
  other.root_.clear();
}

Repository::~Repository() {
  if (lock_fd_ >= 0) {
    ::close(lock_fd_);
    std::error_code ec;
    fs::remove(root_ / "LOCK", ec);
  }
}

Repository Repository::init(const fs::path& root, Clock clock) {
  Repository repo(root, std::move(clock), /*create=*/true);
  Commit init;
  init.message = "init";
  init.author = "lakekit";
  init.timestamp = repo.clock_();
  std::string bytes = commit_to_json(init).dump();
  CommitId id{repo.store_->put(bytes)};
  Branch main{"main", id, BranchClass::Normal, id};
  repo.write_branch_file(main);
  return repo;
}

Repository Repository::open(const fs::path& root, Clock clock) {
  return Repository(root, std::move(clock), /*create=*/false);
}

std::string Repository::ref_path(const std::string& branch) const {
  return (root_ / "refs" / "branches" / branch).string();
}

Branch Repository::read_branch_file(const fs::path& p,
                                    const std::string& name) const {
  auto text = read_file(p);
  if (!text) throw Error(Errc::UnknownRef, "no branch '" + name + "'");
  std::istringstream in(*text);
  std::string cls, head, from;
  in >> cls >> head >> from;
  if (head.empty()) throw Error(Errc::CorruptObject, "bad ref file " + p.string());
  return Branch{name, CommitId{head}, class_from_name(cls), CommitId{from}};
}

void Repository::write_branch_file(const Branch& b) {
  atomic_write(ref_path(b.name), std::string(branch_class_name(b.cls)) + " " +
                                     b.head.hex + " " + b.created_from.hex +
                                     "\n");
}

bool Repository::branch_exists(const std::string& name) const {
  return fs::is_regular_file(ref_path(name));
}

Branch Repository::branch(const std::string& name) const {
  return read_branch_file(ref_path(name), name);
}

std::vector<Branch> Repository::list_branches() const {
  std::vector<Branch> out;
  fs::path base = root_ / "refs" / "branches";
  for (auto it = fs::recursive_directory_iterator(base);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    std::string name = fs::relative(it->path(), base).generic_string();
    out.push_back(read_branch_file(it->path(), name));
  }
  std::sort(out.begin(), out.end(),
            [](const Branch& a, const Branch& b) { return a.name < b.name; });
  return out;
}

std::vector<Tag> Repository::list_tags() const {
  std::vector<Tag> out;
  fs::path base = root_ / "refs" / "tags";
  for (auto it = fs::recursive_directory_iterator(base);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file()) continue;
    std::string name = fs::relative(it->path(), base).generic_string();
    auto text = read_file(it->path());
    std::string hex = *text;
    while (!hex.empty() && (hex.back() == '\n' || hex.back() == ' '))
      hex.pop_back();
    out.push_back(Tag{name, CommitId{hex}});
  }
  std::sort(out.begin(), out.end(),
            [](const Tag& a, const Tag& b) { return a.name < b.name; });
  return out;
}

CommitId Repository::resolve_ref(const std::string& spec) const {
  if (spec.rfind("commit:", 0) == 0) {
    std::string hex = spec.substr(7);
    if (!store_->contains(hex))
      throw Error(Errc::UnknownRef, "no commit " + hex);
    return CommitId{hex};
  }
  if (spec.rfind("tag:", 0) == 0) {
    std::string name = spec.substr(4);
    auto text = read_file(root_ / "refs" / "tags" / name);
    if (!text) throw Error(Errc::UnknownRef, "no tag '" + name + "'");
    std::string hex = *text;
    while (!hex.empty() && hex.back() == '\n') hex.pop_back();
    return CommitId{hex};
  }
  return branch(spec).head;
}

Branch Repository::create_branch(const std::string& name, const std::string& from,
                                 BranchClass cls, bool allow_from_aborted) {
  if (!valid_ref_name(name))
    throw Error(Errc::UnknownRef, "invalid branch name '" + name + "'");
  std::lock_guard<std::mutex> lock(ref_mutex_);
  if (branch_exists(name)) throw Error(Errc::BranchExists, name);
  if (branch_exists(from) && branch(from).cls == BranchClass::Aborted &&
      !allow_from_aborted)
    throw Error(Errc::AbortedSourceForbidden,
                "branch '" + from + "' is aborted");
  CommitId head = resolve_ref(from);
  Branch b{name, head, cls, head};
  write_branch_file(b);
  return b;
}

void Repository::delete_branch(const std::string& name) {
  if (name == "main") throw Error(Errc::CannotDeleteMain, "main is permanent");
  std::lock_guard<std::mutex> lock(ref_mutex_);
  if (!branch_exists(name)) throw Error(Errc::UnknownRef, "no branch '" + name + "'");
  fs::remove(ref_path(name));
}

Tag Repository::tag_commit(const std::string& name, const std::string& target) {
  if (!valid_ref_name(name))
    throw Error(Errc::UnknownRef, "invalid tag name '" + name + "'");
  std::lock_guard<std::mutex> lock(ref_mutex_);
  fs::path p = root_ / "refs" / "tags" / name;
  if (fs::exists(p)) throw Error(Errc::TagExists, name);
  CommitId id = resolve_ref(target);
  atomic_write(p, id.hex + "\n");
  return Tag{name, id};
}

void Repository::set_branch_head(const std::string& name, const CommitId& expected,
                                 const CommitId& next) {
  std::lock_guard<std::mutex> lock(ref_mutex_);
  Branch b = branch(name);
  if (b.cls == BranchClass::Aborted)
    throw Error(Errc::AbortedBranchImmutable, name);
  if (b.head != expected)
    throw Error(Errc::CasConflict, "head of '" + name + "' moved");
  b.head = next;
  write_branch_file(b);
}

void Repository::set_branch_class(const std::string& name, BranchClass cls) {
  std::lock_guard<std::mutex> lock(ref_mutex_);
  Branch b = branch(name);
  b.cls = cls;
  write_branch_file(b);
}

Commit Repository::commit(const CommitId& id) const {
  auto bytes = store_->get(id.hex);
  if (!bytes) throw Error(Errc::UnknownRef, "no commit " + id.hex);
  return commit_from_json(json::parse(*bytes), id);
}

SnapshotId Repository::store_snapshot(const ::lakekit::Table& data) {
  json rows = json::array();
  for (const auto& row : data.rows) {
    json jr = json::array();
    for (const auto& v : row) jr.push_back(value_to_json(v));
    rows.push_back(std::move(jr));
  }
  std::string payload = json{{"kind", "rows"}, {"rows", rows}}.dump();
  std::string payload_key = store_->put(payload);
  json record{{"kind", "snapshot"},
              {"row_count", data.rows.size()},
              {"row_data", payload_key},
              {"schema", data.schema.to_json()}};
  return SnapshotId{store_->put(record.dump())};
}

Commit Repository::advance(const std::string& branch_name,
                           const std::string& table, const ::lakekit::Table& data,
                           const CommitId& expected_head, bool create_only) {
  Branch b = branch(branch_name);
  if (b.cls == BranchClass::Aborted)
    throw Error(Errc::AbortedBranchImmutable, branch_name);
  ConformanceReport rep = validate_data(data, data.schema);
  if (!rep.conformant())
    throw Error(Errc::SchemaViolation, "table '" + table + "': " + rep.summary());

  Commit base = commit(expected_head);
  if (create_only && base.tables.count(table))
    throw Error(Errc::TableExists, table);

  SnapshotId snap = store_snapshot(data);
  Commit co;
  co.tables = base.tables;
  co.tables[table] = snap;
  co.parents = {expected_head};
  // the branch name is part of the commit identity; otherwise a clean
  // re-run could mint a byte-identical commit that the aborted-lineage
  // registry already condemned
  co.message = "write " + table + " on " + branch_name;
  co.author = "lakekit";
  co.timestamp = clock_();
  std::string bytes = commit_to_json(co).dump();
  co.id = CommitId{store_->put(bytes)};
  set_branch_head(branch_name, expected_head, co.id);
  return co;
}

Commit Repository::write_table(const std::string& branch, const std::string& table,
                               const ::lakekit::Table& data,
                               const CommitId& expected_head) {
  return advance(branch, table, data, expected_head, /*create_only=*/false);
}

Commit Repository::create_table(const std::string& branch, const std::string& table,
                                const ::lakekit::Table& data,
                                const CommitId& expected_head) {
  return advance(branch, table, data, expected_head, /*create_only=*/true);
}

Commit Repository::store_commit(std::map<std::string, SnapshotId> tables,
                                std::vector<CommitId> parents,
                                const std::string& message,
                                const std::string& author) {
  Commit co;
  co.tables = std::move(tables);
  co.parents = std::move(parents);
  co.message = message;
  co.author = author;
  co.timestamp = clock_();
  co.id = CommitId{store_->put(commit_to_json(co).dump())};
  return co;
}

TableSnapshot Repository::snapshot(const SnapshotId& id) const {
  auto bytes = store_->get(id.hex);
  if (!bytes) throw Error(Errc::CorruptObject, "missing snapshot " + id.hex);
  json j = json::parse(*bytes);
  TableSnapshot s;
  s.id = id;
  s.schema = SchemaContract::from_json(j.at("schema"));
  s.row_data = j.at("row_data").get<std::string>();
  s.row_count = j.at("row_count").get<uint64_t>();
  return s;
}

TableSnapshot Repository::snapshot_meta(const std::string& ref,
                                        const std::string& table) const {
  Commit c = commit(resolve_ref(ref));
  auto it = c.tables.find(table);
  if (it == c.tables.end())
    throw Error(Errc::NoSuchTable, table + " at " + ref);
  return snapshot(it->second);
}

::lakekit::Table Repository::load_snapshot(const TableSnapshot& meta) const {
  auto bytes = store_->get(meta.row_data);
  if (!bytes) throw Error(Errc::CorruptObject, "missing payload " + meta.row_data);
  payload_reads_.fetch_add(1);
  ::lakekit::Table t;
  t.schema = meta.schema;
  json j = json::parse(*bytes);
  for (const auto& jr : j.at("rows")) {
    Row row;
    for (size_t i = 0; i < meta.schema.columns.size(); ++i)
      row.push_back(value_from_json(meta.schema.columns[i].type.base, jr.at(i)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

::lakekit::Table Repository::read_table(const std::string& ref,
                                        const std::string& table) const {
  return load_snapshot(snapshot_meta(ref, table));
}

SchemaContract Repository::table_schema(const std::string& ref,
                                        const std::string& table) const {
  return snapshot_meta(ref, table).schema;
}

std::vector<Commit> Repository::log(const std::string& ref, size_t limit) const {
  std::vector<Commit> out;
  CommitId id = resolve_ref(ref);
  while (out.size() < limit) {
    Commit c = commit(id);
    out.push_back(c);
    if (c.parents.empty()) break;
    id = c.parents.front();  // first-parent chain
  }
  return out;
}

void Repository::record_aborted_commits(const std::vector<CommitId>& ids) {
  std::lock_guard<std::mutex> lock(ref_mutex_);
  std::ofstream out(root_ / "aborted_commits", std::ios::app);
  for (const auto& id : ids) out << id.hex << "\n";
}

std::set<std::string> Repository::aborted_commits() const {
  std::set<std::string> out;
  std::ifstream in(root_ / "aborted_commits");
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.insert(line);
  return out;
}

std::string Repository::archive_bytes(std::string_view bytes) {
  return store_->put(bytes);
}

std::optional<std::string> Repository::fetch_bytes(const std::string& digest) const {
  return store_->get(digest);
}

void Repository::fsck() const {
  std::unordered_map<std::string, int> color;  // 0 white, 1 grey, 2 black
  std::string init_id;
  std::function<void(const CommitId&)> dfs = [&](const CommitId& id) {
    int& c = color[id.hex];
    if (c == 1) throw Error(Errc::CorruptObject, "cycle through " + id.hex);
    if (c == 2) return;
    c = 1;
    Commit co = commit(id);  // throws if missing/corrupt
    if (co.parents.empty()) {
      if (!init_id.empty() && init_id != id.hex)
        throw Error(Errc::CorruptObject, "multiple root commits");
      init_id = id.hex;
    }
    for (const auto& [t, s] : co.tables)
      if (!store_->get(s.hex))
        throw Error(Errc::CorruptObject, "missing snapshot " + s.hex);
    for (const auto& p : co.parents) dfs(p);
    c = 2;
  };
  for (const auto& b : list_branches()) dfs(b.head);
  for (const auto& t : list_tags()) dfs(t.target);
}

}  // namespace lakekit
