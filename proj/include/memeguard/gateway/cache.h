#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

namespace memeguard::gateway {

// Identifies one semantic request: the endpoint kind plus the SHA-256 of the
// request's canonical JSON (sorted keys, images replaced by content digests).
struct CacheKey {
  std::string kind;    // chat, embedding, search, conceptnet
  std::string digest;  // hex SHA-256

  std::string ToString() const { return kind + "/" + digest; }
  bool operator<(const CacheKey& o) const {
    return kind != o.kind ? kind < o.kind : digest < o.digest;
  }
  bool operator==(const CacheKey&) const = default;
};

CacheKey MakeCacheKey(const std::string& kind, const nlohmann::json& canonical_request);

struct CacheEntry {
  nlohmann::json request;
  nlohmann::json response;
  double latency_ms = 0.0;
};

// Content-addressed response store. On disk, each entry is one JSON file at
// <dir>/<kind>/<digest[0:2]>/<digest>.json holding the request and response
// together so the cache can be audited by hand. Without a directory the
// cache lives in memory only.
class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  std::optional<CacheEntry> Get(const CacheKey& key);
  void Put(const CacheKey& key, const CacheEntry& entry);

  const std::optional<std::filesystem::path>& dir() const { return dir_; }
  std::filesystem::path EntryPath(const CacheKey& key) const;

 private:
  std::optional<std::filesystem::path> dir_;
  std::mutex mu_;
  std::map<CacheKey, CacheEntry> memory_;
};

}  // namespace memeguard::gateway
