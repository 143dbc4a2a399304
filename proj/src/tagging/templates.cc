#include "memeguard/tagging/templates.h"

#include <cstdlib>
#include <set>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"

namespace memeguard::tagging {

TemplateSet TemplateSet::Load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("template directory not found: " + dir.string());
  }
  TemplateSet set;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    set.texts_[entry.path().stem().string()] = ReadFileBytes(entry.path());
  }
  if (set.texts_.empty()) throw ConfigError("no templates in " + dir.string());
  return set;
}

void TemplateSet::Set(const std::string& name, std::string text) {
  texts_[name] = std::move(text);
}

const std::string& TemplateSet::Text(const std::string& name) const {
  auto it = texts_.find(name);
  if (it == texts_.end()) throw ConfigError("missing prompt template '" + name + "'");
  return it->second;
}

std::string TemplateSet::Render(const std::string& name,
                                const std::map<std::string, std::string>& values) const {
  const std::string& tpl = Text(name);
  std::string out;
  std::set<std::string> used;
  for (size_t i = 0; i < tpl.size(); ++i) {
    char c = tpl[i];
    if ((c == '{' || c == '}') && i + 1 < tpl.size() && tpl[i + 1] == c) {
      out.push_back(c);
      ++i;
      continue;
    }
    if (c != '{') {
      out.push_back(c);
      continue;
    }
    size_t close = tpl.find('}', i);
    if (close == std::string::npos) {
      throw ConfigError("template '" + name + "' has an unclosed placeholder");
    }
    std::string key = tpl.substr(i + 1, close - i - 1);
    auto it = values.find(key);
    if (it == values.end()) {
      throw ConfigError("template '" + name + "' uses {" + key + "} but no value was given");
    }
    out += it->second;
    used.insert(key);
    i = close;
  }
  for (const auto& [key, value] : values) {
    if (!used.count(key)) {
      throw ConfigError("template '" + name + "' has no {" + key + "} placeholder");
    }
  }
  return out;
}

nlohmann::json TemplateSet::Checksums() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, text] : texts_) j[name] = Sha256Hex(text);
  return j;
}

std::filesystem::path DefaultTemplateDir() {
  if (const char* env = std::getenv("MEMEGUARD_TEMPLATE_DIR"); env && *env) return env;
#ifdef MEMEGUARD_DEFAULT_TEMPLATE_DIR
  return MEMEGUARD_DEFAULT_TEMPLATE_DIR;
#else
  return "templates";
#endif
}

}  // namespace memeguard::tagging
