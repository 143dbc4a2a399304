#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memeguard/cli/cli.h"
#include "memeguard/corpus/corpus.h"
#include "memeguard/gateway/gateway.h"
#include "memeguard/tagging/templates.h"

namespace memeguard::cli {

enum class Format { kTable, kRecords };

// Flags shared by every subcommand, plus what the run learns along the way.
struct Context {
  const Environment* env = nullptr;
  std::vector<std::string> args;

  std::string config_file;
  std::vector<std::string> set_overrides;  // key=value, applied last
  std::string cache_dir;
  bool offline = false;
  std::string template_dir;
  int workers = 8;
  std::string format = "table";

  std::ostream& out() const { return *env->out; }
  std::ostream& err() const { return *env->err; }
  Format OutputFormat() const;

  // Gateway config with precedence flags > environment > file. The
  // sources are remembered for the run manifest.
  gateway::GatewayConfig GatewayConfig();
  std::unique_ptr<gateway::ModelGateway> MakeGateway();
  tagging::TemplateSet Templates() const;

  nlohmann::json config_sources;
};

// Collects what an artifact-producing command did and writes it as
// <out>/run_manifest.json. Every output path must lie inside the output
// directory.
class RunManifest {
 public:
  RunManifest(const Context& ctx, std::string command, const std::filesystem::path& out_dir);

  // Resolves `name` inside the output directory and records it.
  std::filesystem::path Output(const std::string& name);
  void Seed(const std::string& name, uint64_t value) { seeds_[name] = value; }
  void Set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  void Templates(const tagging::TemplateSet& templates) { checksums_ = templates.Checksums(); }
  void Gateway(const gateway::ModelGateway& gateway);
  void Write();

  const std::filesystem::path& dir() const { return dir_; }

 private:
  const Context& ctx_;
  std::string command_;
  std::filesystem::path dir_;
  std::string started_at_;
  std::vector<std::string> outputs_;
  std::map<std::string, uint64_t> seeds_;
  nlohmann::json checksums_ = nlohmann::json::object();
  nlohmann::json gateway_ = nullptr;
  nlohmann::json extra_ = nlohmann::json::object();
};

std::string UtcNow();

corpus::Corpus LoadCorpusOrThrow(const std::string& path, const Context& ctx);

// Aligned text table; the first row is the header.
std::string FormatTable(const std::vector<std::vector<std::string>>& rows);
std::string Fixed(double value, int digits = 2);

// Each registers its subcommand tree on `app`. The action to run after a
// successful parse is stored in `*action`.
using Action = std::function<int()>;

// A leaf subcommand whose parse callback installs `fn` as the action.
inline CLI::App* Leaf(CLI::App& parent, const std::string& name, const std::string& description,
                      Action* action, Action fn) {
  CLI::App* sub = parent.add_subcommand(name, description);
  sub->callback([action, fn = std::move(fn)] { *action = fn; });
  return sub;
}

void AddCorpusCommands(CLI::App& app, Context& ctx, Action* action);
void AddTagsCommands(CLI::App& app, Context& ctx, Action* action);
void AddExemplarCommands(CLI::App& app, Context& ctx, Action* action);
void AddDetectCommands(CLI::App& app, Context& ctx, Action* action);
void AddEvalCommands(CLI::App& app, Context& ctx, Action* action);
void AddAnnotateCommands(CLI::App& app, Context& ctx, Action* action);

}  // namespace memeguard::cli
