#include "memeguard/gateway/gateway.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <fmt/format.h>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/text.h"

namespace memeguard::gateway {
namespace {

using nlohmann::json;

std::string MimeType(const std::filesystem::path& path) {
  std::string ext = text::ToLowerAscii(path.extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

std::string DataUrl(const std::filesystem::path& path) {
  return "data:" + MimeType(path) + ";base64," + Base64Encode(ReadFileBytes(path));
}

json MessagesJson(const ChatRequest& request, bool canonical) {
  json messages = json::array();
  for (const ChatMessage& m : request.messages) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", m.text}});
    for (const auto& image : m.images) {
      if (canonical) {
        content.push_back({{"type", "image"}, {"sha256", Sha256FileHex(image)}});
      } else {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", DataUrl(image)}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  return messages;
}

bool Retryable(int status) { return status == 429 || status >= 500; }

std::string Snippet(const std::string& body) { return text::TruncateUtf8(body, 300); }

std::string TruncateCodePoints(const std::string& s, size_t max_cps) {
  auto cps = text::DecodeUtf8(s);
  if (cps.size() <= max_cps) return s;
  cps.resize(max_cps);
  return text::EncodeUtf8(cps);
}

}  // namespace

void ValidateChatRequest(const ChatRequest& request) {
  if (request.model_id.empty()) throw ValidationError("chat request without model id");
  if (!(request.temperature > 0.0)) {
    throw ValidationError(fmt::format("temperature must be > 0, got {}", request.temperature));
  }
  if (request.max_new_tokens < 1) {
    throw ValidationError(
        fmt::format("max_new_tokens must be >= 1, got {}", request.max_new_tokens));
  }
  if (request.messages.empty()) throw ValidationError("chat request without messages");
  for (size_t i = 0; i < request.messages.size(); ++i) {
    const std::string& role = request.messages[i].role;
    if (role == "system" && i != 0) {
      throw ValidationError("system message must come first and appear once");
    }
    if (role != "system" && role != "user" && role != "assistant") {
      throw ValidationError("unknown chat role '" + role + "'");
    }
  }
}

json ChatWireJson(const ChatRequest& request) {
  return {{"model", request.model_id},
          {"messages", MessagesJson(request, false)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_new_tokens}};
}

json ChatCanonicalJson(const ChatRequest& request) {
  return {{"model", request.model_id},
          {"messages", MessagesJson(request, true)},
          {"temperature", request.temperature},
          {"max_tokens", request.max_new_tokens}};
}

std::string RenderChatText(const ChatRequest& request) {
  std::vector<std::string> parts;
  for (const ChatMessage& m : request.messages) parts.push_back(m.text);
  return text::Join(parts, "\n");
}

EmbeddingVector Normalize(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ExternalServiceError("embedding endpoint returned a zero or non-finite vector");
  }
  for (double& v : values) v /= norm;
  return {std::move(values), true};
}

double Cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ConfigError(fmt::format("embedding dimensions differ: {} vs {}", a.dim(), b.dim()));
  }
  double dot = 0.0;
  for (size_t i = 0; i < a.dim(); ++i) dot += a.values[i] * b.values[i];
  if (a.normalized && b.normalized) return dot;
  double na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.dim(); ++i) {
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::string ConceptNetSlug(std::string_view term) {
  std::string slug = text::ToLowerAscii(text::CollapseWhitespace(text::Trim(term)));
  std::replace(slug.begin(), slug.end(), ' ', '_');
  return slug;
}

ModelGateway::ModelGateway(GatewayConfig config, std::shared_ptr<Transport> transport)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      cache_(config_.cache_dir),
      slots_(std::clamp(config_.parallelism, 1, 1024)) {}

GatewayStats ModelGateway::stats() const {
  return {network_calls_.load(), cache_hits_.load()};
}

std::vector<std::pair<std::string, std::string>> ModelGateway::AuthHeaders() const {
  std::vector<std::pair<std::string, std::string>> headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  return headers;
}

HttpResponse ModelGateway::SendWithRetry(HttpRequest request) {
  request.timeout = config_.timeout;
  const int attempts = std::max(1, config_.max_attempts);
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(config_.backoff * (1 << std::min(attempt - 2, 16)));
    }
    network_calls_.fetch_add(1);
    HttpResponse response;
    try {
      response = transport_->Send(request);
    } catch (const TransportError& e) {
      last_error = e.what();
      last_status = 0;
      continue;
    }
    if (response.status >= 200 && response.status < 300) return response;
    last_status = response.status;
    last_error = fmt::format("HTTP {}: {}", response.status, Snippet(response.body));
    if (!Retryable(response.status)) {
      throw ExternalServiceError(request.url + " failed with " + last_error, response.status);
    }
  }
  throw ExternalServiceError(
      fmt::format("{} failed after {} attempts: {}", request.url, attempts, last_error),
      last_status);
}

CacheEntry ModelGateway::Fetch(const CacheKey& key, const json& canonical,
                               const std::function<json()>& perform, bool* from_cache) {
  if (from_cache != nullptr) *from_cache = true;
  if (auto hit = cache_.Get(key)) {
    cache_hits_.fetch_add(1);
    return *hit;
  }

  std::promise<CacheEntry> promise;
  std::shared_future<CacheEntry> future;
  bool owner = false;
  {
    std::lock_guard<std::mutex> lock(inflight_mu_);
    auto it = inflight_.find(key);
    if (it != inflight_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      inflight_.emplace(key, future);
      owner = true;
    }
  }
  if (!owner) {
    cache_hits_.fetch_add(1);
    return future.get();
  }

  auto finish = [&] {
    std::lock_guard<std::mutex> lock(inflight_mu_);
    inflight_.erase(key);
  };
  try {
    // Another thread may have completed the same key between our cache probe
    // and registering as owner.
    if (auto hit = cache_.Get(key)) {
      cache_hits_.fetch_add(1);
      promise.set_value(*hit);
      finish();
      return *hit;
    }
    if (config_.offline) {
      throw ExternalServiceError("offline mode: no cached response for " + key.ToString());
    }
    if (from_cache != nullptr) *from_cache = false;
    slots_.acquire();
    CacheEntry entry;
    try {
      auto start = std::chrono::steady_clock::now();
      json response = perform();
      auto elapsed = std::chrono::steady_clock::now() - start;
      entry = {canonical, std::move(response),
               std::chrono::duration<double, std::milli>(elapsed).count()};
    } catch (...) {
      slots_.release();
      throw;
    }
    slots_.release();
    cache_.Put(key, entry);
    promise.set_value(entry);
    finish();
    return entry;
  } catch (...) {
    promise.set_exception(std::current_exception());
    finish();
    throw;
  }
}

ChatResult ModelGateway::ChatComplete(const ChatRequest& request) {
  ValidateChatRequest(request);
  if (config_.chat_url.empty() && !config_.offline) {
    throw ConfigError("chat_url is not configured");
  }
  json canonical = ChatCanonicalJson(request);
  CacheKey key = MakeCacheKey("chat", canonical);
  bool from_cache = false;
  CacheEntry entry = Fetch(key, canonical, [&] {
    HttpRequest http;
    http.url = config_.chat_url;
    http.body = ChatWireJson(request).dump();
    http.headers = AuthHeaders();
    HttpResponse response = SendWithRetry(std::move(http));
    json body;
    try {
      body = json::parse(response.body);
    } catch (const json::exception& e) {
      throw ExternalServiceError(std::string("chat endpoint returned invalid JSON: ") + e.what());
    }
    const json* content = nullptr;
    if (body.contains("choices") && body["choices"].is_array() && !body["choices"].empty()) {
      const json& choice = body["choices"][0];
      if (choice.contains("message") && choice["message"].contains("content")) {
        content = &choice["message"]["content"];
      }
    }
    if (content == nullptr || !content->is_string() || content->get<std::string>().empty()) {
      throw ExternalServiceError("chat endpoint returned an empty completion for model " +
                                 request.model_id);
    }
    return json{{"text", content->get<std::string>()}};
  }, &from_cache);
  return {entry.response.at("text").get<std::string>(), entry.latency_ms, from_cache};
}

EmbeddingVector ModelGateway::Embed(const std::string& model, const json& canonical,
                                    const json& wire) {
  if (config_.embeddings_url.empty() && !config_.offline) {
    throw ConfigError("embeddings_url is not configured");
  }
  CacheKey key = MakeCacheKey("embedding", canonical);
  CacheEntry entry = Fetch(key, canonical, [&] {
    HttpRequest http;
    http.url = config_.embeddings_url;
    http.body = wire.dump();
    http.headers = AuthHeaders();
    HttpResponse response = SendWithRetry(std::move(http));
    try {
      json body = json::parse(response.body);
      std::vector<double> values = body.at("data").at(0).at("embedding").get<std::vector<double>>();
      if (values.empty()) throw ExternalServiceError("embedding endpoint returned no values");
      return json{{"embedding", values}};
    } catch (const json::exception& e) {
      throw ExternalServiceError(std::string("malformed embedding response: ") + e.what());
    }
  });
  EmbeddingVector v = Normalize(entry.response.at("embedding").get<std::vector<double>>());
  std::lock_guard<std::mutex> lock(dims_mu_);
  auto [it, inserted] = dims_.emplace(model, v.dim());
  if (!inserted && it->second != v.dim()) {
    throw ConfigError(fmt::format("embedding dimension drift for model {}: {} then {}", model,
                                  it->second, v.dim()));
  }
  return v;
}

EmbeddingVector ModelGateway::EmbedText(std::string_view text) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  const std::string& model = config_.Model("text_embedding");
  json request = {{"model", model}, {"input", std::string(text)}};
  return Embed(model, request, request);
}

EmbeddingVector ModelGateway::EmbedImage(const std::filesystem::path& image) {
  const std::string& model = config_.Model("image_embedding");
  json canonical = {{"model", model},
                    {"input", {{"sha256", Sha256FileHex(image)}}},
                    {"input_type", "image"}};
  json wire = {{"model", model}, {"input", DataUrl(image)}, {"input_type", "image"}};
  return Embed(model, canonical, wire);
}

TagExpansion ModelGateway::ExpandTag(std::string_view tag) {
  if (text::Trim(tag).empty()) throw ValidationError("cannot expand an empty tag");
  if (config_.search_url.empty() && !config_.offline) {
    warnings_.Add(fmt::format("tag expansion for '{}' skipped: search_url not configured", tag));
    return {"", true};
  }
  json canonical = {{"q", std::string(tag)}};
  CacheKey key = MakeCacheKey("search", canonical);
  json response;
  try {
    response = Fetch(key, canonical, [&] {
      HttpRequest http;
      http.method = "GET";
      std::string url = config_.search_url;
      url += (url.find('?') == std::string::npos ? "?" : "&");
      url += "q=" + UrlEncode(tag);
      if (const char* k = std::getenv(config_.search_key_env.c_str()); k && *k) {
        url += "&key=" + UrlEncode(k);
      }
      http.url = url;
      HttpResponse r = SendWithRetry(std::move(http));
      try {
        json body = json::parse(r.body);
        std::vector<std::string> snippets;
        if (body.contains("items") && body["items"].is_array()) {
          for (const json& item : body["items"]) {
            if (item.contains("snippet") && item["snippet"].is_string()) {
              snippets.push_back(text::CollapseWhitespace(item["snippet"].get<std::string>()));
            }
          }
        }
        return json{{"snippets", snippets}};
      } catch (const json::exception& e) {
        throw ExternalServiceError(std::string("malformed search response: ") + e.what());
      }
    }).response;
  } catch (const ExternalServiceError& e) {
    warnings_.Add(fmt::format("tag expansion for '{}' unavailable: {}", tag, e.what()));
    return {"", true};
  }
  std::string joined = text::Trim(text::Join(response.at("snippets"), " "));
  if (joined.empty()) {
    warnings_.Add(fmt::format("tag expansion for '{}' is empty", tag));
    return {"", true};
  }
  return {TruncateCodePoints(joined, kMaxExpansionChars), false};
}

double ModelGateway::ConceptNetRelatedness(std::string_view a, std::string_view b) {
  std::string sa = ConceptNetSlug(a), sb = ConceptNetSlug(b);
  if (sa.empty() || sb.empty()) throw ValidationError("ConceptNet terms must be non-empty");
  if (sa == sb) return 1.0;
  if (sb < sa) std::swap(sa, sb);
  json canonical = {{"node1", "/c/en/" + sa}, {"node2", "/c/en/" + sb}};
  CacheKey key = MakeCacheKey("conceptnet", canonical);
  json response;
  try {
    response = Fetch(key, canonical, [&] {
      HttpRequest http;
      http.method = "GET";
      http.url = config_.conceptnet_url + "/relatedness?node1=" + UrlEncode("/c/en/" + sa) +
                 "&node2=" + UrlEncode("/c/en/" + sb);
      HttpResponse r = SendWithRetry(std::move(http));
      try {
        json body = json::parse(r.body);
        if (!body.contains("value") || !body["value"].is_number()) return json{{"value", nullptr}};
        return json{{"value", body["value"].get<double>()}};
      } catch (const json::exception& e) {
        throw ExternalServiceError(std::string("malformed ConceptNet response: ") + e.what());
      }
    }).response;
  } catch (const ExternalServiceError& e) {
    if (e.http_status() == 400 || e.http_status() == 404) {
      warnings_.Add(fmt::format("ConceptNet does not know '{}' or '{}'", sa, sb));
      return 0.0;
    }
    throw;
  }
  if (response.at("value").is_null()) {
    warnings_.Add(fmt::format("ConceptNet returned no relatedness for '{}' / '{}'", sa, sb));
    return 0.0;
  }
  return std::clamp(response["value"].get<double>(), -1.0, 1.0);
}

}  // namespace memeguard::gateway
