#pragma once

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "memeguard/common/warnings.h"
#include "memeguard/gateway/cache.h"
#include "memeguard/gateway/config.h"
#include "memeguard/gateway/transport.h"

namespace memeguard::gateway {

struct ChatMessage {
  std::string role;  // system, user, assistant
  std::string text;
  std::vector<std::filesystem::path> images;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.001;
  int max_new_tokens = 30;
};

// temperature > 0, max_new_tokens >= 1, at most one system message and only
// in first position. Throws ValidationError.
void ValidateChatRequest(const ChatRequest& request);

// OpenAI-compatible chat-completion body. Images become base64 data URLs.
nlohmann::json ChatWireJson(const ChatRequest& request);

// Same shape with each image replaced by {"sha256": ...}; this is what the
// cache key is computed from.
nlohmann::json ChatCanonicalJson(const ChatRequest& request);

// All text of the request's messages, joined by newlines.
std::string RenderChatText(const ChatRequest& request);

struct ChatResult {
  std::string text;
  double latency_ms = 0.0;  // as recorded when the response was first fetched
  bool from_cache = false;
};

struct EmbeddingVector {
  std::vector<double> values;
  bool normalized = false;

  size_t dim() const { return values.size(); }
};

// Scales to unit L2 norm. Throws ExternalServiceError on a zero vector.
EmbeddingVector Normalize(std::vector<double> values);

// Dot product; equals cosine similarity for normalized inputs.
double Cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct TagExpansion {
  std::string text;
  bool degraded = false;  // service unavailable or empty result
};

// ConceptNet node slug: trimmed, lowercased, spaces to underscores.
std::string ConceptNetSlug(std::string_view term);

inline constexpr size_t kMaxExpansionChars = 500;

struct GatewayStats {
  size_t network_calls = 0;
  size_t cache_hits = 0;
};

// Client for every external model and knowledge service. Thread-safe.
//
// Every request is keyed by a canonical digest. A hit is served from the
// cache; a miss performs the call (bounded by `parallelism` concurrent
// requests), stores the request/response pair and returns it. Concurrent
// misses on the same key share one network call.
class ModelGateway {
 public:
  ModelGateway(GatewayConfig config, std::shared_ptr<Transport> transport);

  ChatResult ChatComplete(const ChatRequest& request);

  EmbeddingVector EmbedText(std::string_view text);
  EmbeddingVector EmbedImage(const std::filesystem::path& image);

  // Top search snippets joined and truncated to kMaxExpansionChars code
  // points. Never throws for service failures; the result is flagged
  // degraded and a warning is recorded.
  TagExpansion ExpandTag(std::string_view tag);

  // Relatedness in [-1, 1]. Identical slugs short-circuit to 1.0. Unknown
  // terms yield 0 with a warning.
  double ConceptNetRelatedness(std::string_view a, std::string_view b);

  const GatewayConfig& config() const { return config_; }
  Warnings& warnings() { return warnings_; }
  GatewayStats stats() const;

 private:
  CacheEntry Fetch(const CacheKey& key, const nlohmann::json& canonical,
                   const std::function<nlohmann::json()>& perform,
                   bool* from_cache = nullptr);
  HttpResponse SendWithRetry(HttpRequest request);
  std::vector<std::pair<std::string, std::string>> AuthHeaders() const;
  EmbeddingVector Embed(const std::string& model, const nlohmann::json& canonical,
                        const nlohmann::json& wire);

  GatewayConfig config_;
  std::shared_ptr<Transport> transport_;
  ResponseCache cache_;
  std::counting_semaphore<1024> slots_;
  Warnings warnings_;

  std::mutex inflight_mu_;
  std::map<CacheKey, std::shared_future<CacheEntry>> inflight_;

  std::mutex dims_mu_;
  std::map<std::string, size_t> dims_;

  std::atomic<size_t> network_calls_{0};
  std::atomic<size_t> cache_hits_{0};
};

}  // namespace memeguard::gateway
