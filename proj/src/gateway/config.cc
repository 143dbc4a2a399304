#include "memeguard/gateway/config.h"

#include <cstdlib>
#include <fstream>
#include <vector>

#include "memeguard/common/errors.h"
#include "memeguard/common/text.h"

namespace memeguard::gateway {
namespace {

const std::vector<std::string>& KnownKeys() {
  static const std::vector<std::string> kKeys = {
      "chat_url",          "embeddings_url",      "search_url",
      "conceptnet_url",    "model.caption",       "model.teacher",
      "model.summary",     "model.extract",       "model.classifier",
      "model.text_embedding", "model.image_embedding", "api_key_env",
      "search_key_env",    "timeout_seconds",     "parallelism",
      "max_attempts",      "backoff_ms",          "cache_dir",
      "offline"};
  return kKeys;
}

int ParsePositiveInt(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size() || v < 1) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a positive integer, got '" +
                      value + "'");
  }
}

std::string EnvName(const std::string& key) {
  std::string name = "MEMEGUARD_";
  for (char c : key) {
    name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(c)));
  }
  return name;
}

}  // namespace

const std::string& GatewayConfig::Model(const std::string& role) const {
  auto it = models.find(role);
  if (it == models.end()) throw ConfigError("no model configured for role '" + role + "'");
  return it->second;
}

void GatewayConfig::Set(const std::string& key, const std::string& value) {
  if (key.find("api_key") != std::string::npos && key != "api_key_env") {
    throw ConfigError("'" + key + "': API keys are read from the environment only");
  }
  if (key == "chat_url") {
    chat_url = value;
  } else if (key == "embeddings_url") {
    embeddings_url = value;
  } else if (key == "search_url") {
    search_url = value;
  } else if (key == "conceptnet_url") {
    conceptnet_url = value;
  } else if (key.rfind("model.", 0) == 0 && models.count(key.substr(6))) {
    models[key.substr(6)] = value;
  } else if (key == "api_key_env") {
    api_key_env = value;
  } else if (key == "search_key_env") {
    search_key_env = value;
  } else if (key == "timeout_seconds") {
    timeout = std::chrono::seconds(ParsePositiveInt(key, value));
  } else if (key == "parallelism") {
    parallelism = ParsePositiveInt(key, value);
  } else if (key == "max_attempts") {
    max_attempts = ParsePositiveInt(key, value);
  } else if (key == "backoff_ms") {
    int v = value == "0" ? 0 : ParsePositiveInt(key, value);
    backoff = std::chrono::milliseconds(v);
  } else if (key == "cache_dir") {
    if (value.empty()) {
      cache_dir.reset();
    } else {
      cache_dir = value;
    }
  } else if (key == "offline") {
    offline = (value == "1" || value == "true" || value == "yes");
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

nlohmann::json GatewayConfig::ToJson() const {
  nlohmann::json j;
  j["chat_url"] = chat_url;
  j["embeddings_url"] = embeddings_url;
  j["search_url"] = search_url;
  j["conceptnet_url"] = conceptnet_url;
  j["models"] = models;
  j["timeout_ms"] = timeout.count();
  j["parallelism"] = parallelism;
  j["max_attempts"] = max_attempts;
  j["backoff_ms"] = backoff.count();
  j["cache_dir"] = cache_dir ? cache_dir->string() : "";
  j["offline"] = offline;
  return j;
}

GatewayConfig LoadGatewayConfig(const std::optional<std::filesystem::path>& file) {
  GatewayConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file: " + file->string());
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = text::Trim(line);
      if (line.empty()) continue;
      size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(file->string() + ":" + std::to_string(line_number) +
                          ": expected key = value");
      }
      config.Set(text::Trim(line.substr(0, eq)), text::Trim(line.substr(eq + 1)));
    }
  }
  for (const std::string& key : KnownKeys()) {
    if (const char* env = std::getenv(EnvName(key).c_str())) config.Set(key, env);
  }
  return config;
}

std::vector<std::string> ActiveEnvOverrides() {
  std::vector<std::string> out;
  for (const std::string& key : KnownKeys()) {
    if (std::getenv(EnvName(key).c_str())) out.push_back(EnvName(key));
  }
  return out;
}

}  // namespace memeguard::gateway
