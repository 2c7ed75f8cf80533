#include "lakekit/object_store.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include <openssl/evp.h>

#include "lakekit/errors.hpp"

namespace fs = std::filesystem;

namespace lakekit {

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr))
    throw Error(Errc::IoError, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

ObjectStore::ObjectStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path ObjectStore::path_for(const std::string& digest) const {
  if (digest.size() < 3)
    throw Error(Errc::CorruptObject, "bad digest '" + digest + "'");
  return root_ / digest.substr(0, 2) / digest.substr(2);
}

std::string ObjectStore::put(std::string_view bytes) {
  std::string digest = sha256_hex(bytes);
  fs::path p = path_for(digest);
  if (fs::exists(p)) return digest;  // write-once dedupe
  fs::create_directories(p.parent_path());

  // Unique temp name so concurrent identical puts cannot clobber each other
  // mid-write; rename is atomic within the filesystem.
  static std::atomic<uint64_t> seq{0};
  std::ostringstream tmp_name;
  tmp_name << "tmp." << ::getpid() << "." << seq.fetch_add(1);
  fs::path tmp = p.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
  }
  fs::rename(tmp, p);
  puts_.fetch_add(1);
  return digest;
}

std::optional<std::string> ObjectStore::get(const std::string& digest) const {
  fs::path p = path_for(digest);
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string bytes = buf.str();
  if (sha256_hex(bytes) != digest) return std::nullopt;  // detected corruption
  gets_.fetch_add(1);
  return bytes;
}

bool ObjectStore::contains(const std::string& digest) const {
  return fs::exists(path_for(digest));
}

}  // namespace lakekit
