#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace memeguard::gateway {

// Endpoint and model configuration.
//
// File format: one `key = value` per line, `#` starts a comment. Recognized
// keys:
//
//   chat_url, embeddings_url, search_url, conceptnet_url
//   model.caption, model.teacher, model.summary, model.extract,
//   model.classifier, model.text_embedding, model.image_embedding
//   api_key_env, search_key_env     names of environment variables
//   timeout_seconds, parallelism, max_attempts, backoff_ms
//   cache_dir, offline
//
// Every key may be overridden by an environment variable named
// MEMEGUARD_<KEY> with dots replaced by underscores and uppercased
// (MEMEGUARD_MODEL_TEACHER). Secrets never live in the file: a key named
// like `api_key` is rejected.
struct GatewayConfig {
  std::string chat_url;
  std::string embeddings_url;
  std::string search_url;
  std::string conceptnet_url = "https://api.conceptnet.io";

  std::map<std::string, std::string> models = {
      {"caption", "gpt-4o"},          {"teacher", "gpt-4o"},
      {"summary", "summary-model"},   {"extract", "extract-model"},
      {"classifier", "gpt-4o"},       {"text_embedding", "clip-text"},
      {"image_embedding", "clip-image"}};

  std::string api_key_env = "MEMEGUARD_API_KEY";
  std::string search_key_env = "MEMEGUARD_SEARCH_KEY";

  std::chrono::milliseconds timeout{60000};
  int parallelism = 8;
  int max_attempts = 5;
  std::chrono::milliseconds backoff{500};

  std::optional<std::filesystem::path> cache_dir;
  // Cache misses become errors instead of network calls.
  bool offline = false;

  const std::string& Model(const std::string& role) const;

  // Applies one key/value; throws ConfigError for unknown keys or bad values.
  void Set(const std::string& key, const std::string& value);

  // Stable JSON view without secrets, for run manifests.
  nlohmann::json ToJson() const;
};

// Reads the file (if given), then applies MEMEGUARD_* environment overrides.
GatewayConfig LoadGatewayConfig(const std::optional<std::filesystem::path>& file);

// Names of the MEMEGUARD_* variables currently overriding config keys.
std::vector<std::string> ActiveEnvOverrides();

}  // namespace memeguard::gateway
