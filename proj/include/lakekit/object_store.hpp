#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace lakekit {

std::string sha256_hex(std::string_view bytes);

/// Write-once, content-addressed blob store. Keys are the SHA-256 of the
/// bytes; a partially written or tampered object fails digest verification
/// on read and is treated as absent.
class ObjectStore {
 public:
  explicit ObjectStore(std::filesystem::path root);

  /// Stores bytes at their digest. Idempotent: a second put of identical
  /// content performs no write and returns the same digest.
  std::string put(std::string_view bytes);

  std::optional<std::string> get(const std::string& digest) const;
  bool contains(const std::string& digest) const;

  uint64_t put_count() const { return puts_.load(); }
  uint64_t get_count() const { return gets_.load(); }

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_for(const std::string& digest) const;

  std::filesystem::path root_;
  mutable std::atomic<uint64_t> puts_{0};
  mutable std::atomic<uint64_t> gets_{0};
};

}  // namespace lakekit
