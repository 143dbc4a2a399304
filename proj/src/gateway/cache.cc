#include "memeguard/gateway/cache.h"

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"

namespace memeguard::gateway {

CacheKey MakeCacheKey(const std::string& kind, const nlohmann::json& canonical_request) {
  return {kind, Sha256Hex(kind + "\n" + canonical_request.dump())};
}

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir)
    : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::filesystem::path ResponseCache::EntryPath(const CacheKey& key) const {
  if (!dir_) return {};
  return *dir_ / key.kind / key.digest.substr(0, 2) / (key.digest + ".json");
}

std::optional<CacheEntry> ResponseCache::Get(const CacheKey& key) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return it->second;
  }
  if (!dir_) return std::nullopt;
  const auto path = EntryPath(key);
  if (!std::filesystem::exists(path)) return std::nullopt;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ReadFileBytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt cache entry " + path.string() + ": " + e.what());
  }
  CacheEntry entry{j.at("request"), j.at("response"), j.value("latency_ms", 0.0)};
  std::lock_guard<std::mutex> lock(mu_);
  memory_.emplace(key, entry);
  return entry;
}

void ResponseCache::Put(const CacheKey& key, const CacheEntry& entry) {
  if (dir_) {
    nlohmann::json j = {{"kind", key.kind},
                        {"request", entry.request},
                        {"response", entry.response},
                        {"latency_ms", entry.latency_ms}};
    WriteFileAtomic(EntryPath(key), j.dump(2));
  }
  std::lock_guard<std::mutex> lock(mu_);
  memory_[key] = entry;
}

}  // namespace memeguard::gateway
