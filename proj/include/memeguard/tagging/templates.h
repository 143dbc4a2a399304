#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

namespace memeguard::tagging {

// Prompt templates: plain-text files named <name>.txt with {placeholder}
// fields. Each file's SHA-256 is kept so runs can log exactly which
// wording produced their outputs.
class TemplateSet {
 public:
  // Loads every *.txt file in `dir`. Throws ConfigError if the directory
  // is missing or empty.
  static TemplateSet Load(const std::filesystem::path& dir);

  // Adds or replaces a template in memory (tests, overrides).
  void Set(const std::string& name, std::string text);

  bool Has(const std::string& name) const { return texts_.count(name) > 0; }
  const std::string& Text(const std::string& name) const;

  // Substitutes {key} for each entry of `values`. A placeholder in the
  // template with no value, or a value with no placeholder, is a
  // ConfigError: both mean template and code disagree. Literal braces are
  // written {{ and }}.
  std::string Render(const std::string& name,
                     const std::map<std::string, std::string>& values) const;

  // name -> sha256 of the template text.
  nlohmann::json Checksums() const;

 private:
  std::map<std::string, std::string> texts_;
};

// Location of the templates shipped with the build, overridable with
// MEMEGUARD_TEMPLATE_DIR.
std::filesystem::path DefaultTemplateDir();

}  // namespace memeguard::tagging
