#include "memeguard/cli/cli.h"

#include <algorithm>
#include <chrono>
#include <sstream>

#include <fmt/format.h>

#include "internal.h"
#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/gateway/config.h"

namespace memeguard::cli {

using nlohmann::json;

std::string UtcNow() {
  using namespace std::chrono;
  auto now = floor<seconds>(system_clock::now());
  auto day = floor<days>(now);
  year_month_day ymd{day};
  hh_mm_ss hms{now - day};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                     hms.hours().count(), hms.minutes().count(), hms.seconds().count());
}

std::string Fixed(double value, int digits) { return fmt::format("{:.{}f}", value, digits); }

std::string FormatTable(const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream out;
  for (size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (size_t i = 0; i < rows[r].size(); ++i) {
      if (i > 0) line += "  ";
      line += rows[r][i];
      if (i + 1 < rows[r].size()) line.append(widths[i] - rows[r][i].size(), ' ');
    }
    out << line << '\n';
    if (r == 0) {
      size_t total = 0;
      for (size_t w : widths) total += w;
      out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

Format Context::OutputFormat() const {
  return format == "records" ? Format::kRecords : Format::kTable;
}

gateway::GatewayConfig Context::GatewayConfig() {
  std::optional<std::filesystem::path> file;
  if (!config_file.empty()) file = config_file;
  gateway::GatewayConfig config = gateway::LoadGatewayConfig(file);
  json flags = json::array();
  for (const auto& kv : set_overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.Set(kv.substr(0, eq), kv.substr(eq + 1));
    flags.push_back(kv.substr(0, eq));
  }
  if (!cache_dir.empty()) {
    config.cache_dir = cache_dir;
    flags.push_back("cache_dir");
  }
  if (offline) {
    config.offline = true;
    flags.push_back("offline");
  }
  config_sources = {{"precedence", "flags > environment > file"},
                    {"file", file ? json(file->string()) : json(nullptr)},
                    {"environment", gateway::ActiveEnvOverrides()},
                    {"flags", flags}};
  return config;
}

std::unique_ptr<gateway::ModelGateway> Context::MakeGateway() {
  std::shared_ptr<gateway::Transport> transport =
      env->transport ? env->transport() : std::make_shared<gateway::HttpTransport>();
  return std::make_unique<gateway::ModelGateway>(GatewayConfig(), std::move(transport));
}

tagging::TemplateSet Context::Templates() const {
  return tagging::TemplateSet::Load(template_dir.empty() ? tagging::DefaultTemplateDir()
                                                         : std::filesystem::path(template_dir));
}

corpus::Corpus LoadCorpusOrThrow(const std::string& path, const Context& ctx) {
  corpus::LoadResult loaded = corpus::LoadCorpus(path);
  for (const auto& e : loaded.errors) {
    ctx.err() << fmt::format("warning: {}:{}: {}\n", path, e.line_number, e.message);
  }
  if (!loaded.missing_images.empty()) {
    ctx.err() << fmt::format("warning: {} posts reference missing images\n",
                             loaded.missing_images.size());
  }
  return std::move(loaded.corpus);
}

RunManifest::RunManifest(const Context& ctx, std::string command,
                         const std::filesystem::path& out_dir)
    : ctx_(ctx), command_(std::move(command)), dir_(out_dir), started_at_(UtcNow()) {
  if (dir_.empty()) throw ValidationError("--out is required");
  std::filesystem::create_directories(dir_);
  dir_ = std::filesystem::weakly_canonical(dir_);
}

std::filesystem::path RunManifest::Output(const std::string& name) {
  std::filesystem::path p = std::filesystem::weakly_canonical(dir_ / name);
  auto rel = p.lexically_relative(dir_);
  if (rel.empty() || *rel.begin() == "..") {
    throw ValidationError("output " + name + " would land outside " + dir_.string());
  }
  outputs_.push_back(rel.string());
  return p;
}

void RunManifest::Gateway(const gateway::ModelGateway& gateway) {
  auto stats = gateway.stats();
  gateway_ = {{"config", gateway.config().ToJson()},
              {"network_calls", stats.network_calls},
              {"cache_hits", stats.cache_hits}};
}

void RunManifest::Write() {
  json config = extra_;
  json manifest = {{"command", command_},
                   {"args", ctx_.args},
                   {"started_at", started_at_},
                   {"finished_at", UtcNow()},
                   {"outputs", outputs_},
                   {"seeds", seeds_},
                   {"template_checksums", checksums_},
                   {"gateway", gateway_},
                   {"config_sources", ctx_.config_sources},
                   {"config", config},
                   {"config_digest", Sha256Hex(config.dump())}};
  WriteFileAtomic(dir_ / "run_manifest.json", manifest.dump(2) + "\n");
}

int Run(const std::vector<std::string>& args, const Environment& env_in) {
  Environment env = env_in;
  if (env.out == nullptr) env.out = &std::cout;
  if (env.err == nullptr) env.err = &std::cerr;

  Context ctx;
  ctx.env = &env;
  ctx.args = args;

  CLI::App app{"Meme moderation workbench: corpus preparation, tag generation, "
               "few-shot detection, evaluation and annotation.",
               "memeguard"};
  app.require_subcommand(1);
  // Global flags are accepted after the subcommand too.
  app.fallthrough();
  app.add_option("--config", ctx.config_file, "Gateway config file (key = value lines)");
  app.add_option("--set", ctx.set_overrides, "Override a gateway config key: key=value");
  app.add_option("--cache-dir", ctx.cache_dir, "Gateway response cache directory");
  app.add_flag("--offline", ctx.offline, "Serve model calls from the cache only");
  app.add_option("--template-dir", ctx.template_dir, "Prompt template directory");
  app.add_option("--workers", ctx.workers, "Concurrent requests")->check(CLI::Range(1, 256));
  app.add_option("--format", ctx.format, "Output format for reports")
      ->check(CLI::IsMember({"table", "records"}));

  Action action;
  AddCorpusCommands(app, ctx, &action);
  AddTagsCommands(app, ctx, &action);
  AddExemplarCommands(app, ctx, &action);
  AddDetectCommands(app, ctx, &action);
  AddEvalCommands(app, ctx, &action);
  AddAnnotateCommands(app, ctx, &action);

  auto deepest = [&app] {
    const CLI::App* at = &app;
    while (!at->get_subcommands().empty()) at = at->get_subcommands().front();
    return at;
  };
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    *env.out << deepest()->help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    *env.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    *env.err << "error: " << e.what() << "\n\n" << deepest()->help();
    return kExitValidation;
  }
  if (!action) {
    *env.err << app.help();
    return kExitValidation;
  }

  try {
    return action();
  } catch (const ExternalServiceError& e) {
    *env.err << "error: " << e.what() << '\n';
    return kExitExternal;
  } catch (const ValidationError& e) {
    *env.err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    *env.err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace memeguard::cli
