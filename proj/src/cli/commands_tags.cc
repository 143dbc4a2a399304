#include <mutex>
#include <set>

#include <fmt/format.h>

#include "internal.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/parallel.h"
#include "memeguard/tagging/lens.h"
#include "memeguard/tagging/pipeline.h"

namespace memeguard::cli {
namespace {

using nlohmann::json;

// "train", "test" or "all".
bool InSplit(const corpus::PostRecord& post, const std::string& which) {
  if (which == "all") return true;
  return post.split && ToString(*post.split) == which;
}

std::vector<const corpus::PostRecord*> Select(const corpus::Corpus& c, const std::string& which) {
  std::vector<const corpus::PostRecord*> out;
  for (const auto& p : c.records) {
    if (InSplit(p, which)) out.push_back(&p);
  }
  return out;
}

// Per-post failures collected while a parallel step runs.
struct Failures {
  std::mutex mu;
  std::map<std::string, std::string> by_post;
  bool external = false;

  void Add(const std::string& id, const std::exception& e) {
    std::lock_guard lock(mu);
    by_post[id] = e.what();
    if (dynamic_cast<const ExternalServiceError*>(&e)) external = true;
  }

  void Write(RunManifest& run) {
    std::vector<json> lines;
    for (const auto& [id, msg] : by_post) lines.push_back({{"id", id}, {"error", msg}});
    jsonl::WriteFile(run.Output("errors.jsonl"), lines);
  }

  int ExitCode() const {
    if (by_post.empty()) return kExitOk;
    return external ? kExitExternal : kExitValidation;
  }
};

void ReportWarnings(Context& ctx, RunManifest& run, gateway::ModelGateway& gw) {
  auto warnings = gw.warnings().Snapshot();
  std::sort(warnings.begin(), warnings.end());
  run.Set("warnings", warnings);
  if (!warnings.empty())
    ctx.err() << fmt::format("{} warnings, see run_manifest.json\n", warnings.size());
}

struct CleanLensOptions {
  std::string manifest;
  std::string out;
};

int CleanLens(Context& ctx, const CleanLensOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "tags clean-lens", o.out);
  size_t cleaned = 0;
  for (auto& post : c.records) {
    if (!post.lens_context_raw) continue;
    post.lens_context_clean = tagging::CleanLensContext(*post.lens_context_raw);
    ++cleaned;
  }
  corpus::WriteManifest(c, run.Output("manifest.jsonl"));
  run.Write();
  ctx.out() << fmt::format("cleaned lens context of {} posts\n", cleaned);
  return kExitOk;
}

struct ExpandOptions {
  std::string manifest;
  std::string out;
  std::string split = "all";
};

int Expand(Context& ctx, const ExpandOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "tags expand", o.out);
  auto gw = ctx.MakeGateway();
  std::set<std::string> vocab;
  for (const auto* p : Select(c, o.split)) vocab.insert(p->tags.begin(), p->tags.end());
  std::vector<std::string> tags(vocab.begin(), vocab.end());
  std::vector<gateway::TagExpansion> expansions(tags.size());
  ParallelFor(tags.size(), ctx.workers, [&](size_t i) { expansions[i] = gw->ExpandTag(tags[i]); });
  std::vector<json> lines;
  size_t degraded = 0;
  for (size_t i = 0; i < tags.size(); ++i) {
    degraded += expansions[i].degraded;
    lines.push_back({{"tag", tags[i]},
                     {"expansion", expansions[i].text},
                     {"degraded", expansions[i].degraded}});
  }
  jsonl::WriteFile(run.Output("expansions.jsonl"), lines);
  run.Gateway(*gw);
  ReportWarnings(ctx, run, *gw);
  run.Write();
  ctx.out() << fmt::format("expanded {} tags ({} degraded)\n", tags.size(), degraded);
  return kExitOk;
}

struct SummaryOptions {
  std::string manifest;
  std::string out;
  std::string split = "all";
  std::string inpainted;
  std::string stoplist;
  bool no_expand = false;
};

tagging::TaggingOptions PipelineOptions(const SummaryOptions& o) {
  tagging::TaggingOptions options;
  if (!o.inpainted.empty()) options.inpainted_dir = o.inpainted;
  if (!o.stoplist.empty()) options.stoplist = corpus::LoadStoplist(o.stoplist);
  options.expand_tags = !o.no_expand;
  return options;
}

int GroundTruthSummaries(Context& ctx, const SummaryOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "tags gt-summary", o.out);
  auto gw = ctx.MakeGateway();
  tagging::TemplateSet templates = ctx.Templates();
  tagging::TaggingPipeline pipeline(*gw, templates, PipelineOptions(o));
  auto posts = Select(c, o.split);
  tagging::SummaryStore store;
  Failures failures;
  ParallelFor(posts.size(), ctx.workers, [&](size_t i) {
    const auto& post = *posts[i];
    try {
      if (post.tags.empty()) throw ValidationError("post has no tags");
      auto context = pipeline.BuildContext(c, post, pipeline.options().expand_tags);
      store.Put(pipeline.GenerateSummary(c, post, context, tagging::SummaryKind::kGroundTruth));
    } catch (const std::exception& e) {
      failures.Add(post.id, e);
    }
  });
  store.Save(run.Output("summaries.jsonl"));
  failures.Write(run);
  run.Templates(templates);
  run.Gateway(*gw);
  run.Set("split", o.split);
  run.Set("expand_tags", !o.no_expand);
  run.Set("inpainted", !o.inpainted.empty());
  ReportWarnings(ctx, run, *gw);
  run.Write();
  ctx.out() << fmt::format("{} ground-truth summaries, {} failed\n", store.size(),
                           failures.by_post.size());
  return failures.ExitCode();
}

int Predict(Context& ctx, const SummaryOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "tags predict", o.out);
  auto gw = ctx.MakeGateway();
  tagging::TemplateSet templates = ctx.Templates();
  tagging::TaggingPipeline pipeline(*gw, templates, PipelineOptions(o));
  auto posts = Select(c, o.split);
  tagging::SummaryStore store;
  std::vector<std::optional<std::vector<std::string>>> predicted(posts.size());
  Failures failures;
  ParallelFor(posts.size(), ctx.workers, [&](size_t i) {
    try {
      predicted[i] = pipeline.PredictTags(c, *posts[i], &store);
    } catch (const std::exception& e) {
      failures.Add(posts[i]->id, e);
    }
  });
  std::vector<json> lines;
  for (size_t i = 0; i < posts.size(); ++i) {
    if (predicted[i]) lines.push_back({{"id", posts[i]->id}, {"tags", *predicted[i]}});
  }
  std::sort(lines.begin(), lines.end(),
            [](const json& a, const json& b) { return a["id"] < b["id"]; });
  jsonl::WriteFile(run.Output("predicted_tags.jsonl"), lines);
  store.Save(run.Output("summaries.jsonl"));
  failures.Write(run);
  run.Templates(templates);
  run.Gateway(*gw);
  run.Set("split", o.split);
  ReportWarnings(ctx, run, *gw);
  run.Write();
  ctx.out() << fmt::format("predicted tags for {} posts, {} failed\n", lines.size(),
                           failures.by_post.size());
  return failures.ExitCode();
}

struct ExportOptions {
  std::string manifest;
  std::string summaries;
  std::string task = "summary";
  std::string out;
  std::string inpainted;
};

int ExportFinetune(Context& ctx, const ExportOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "tags export-finetune", o.out);
  auto gw = ctx.MakeGateway();
  tagging::TemplateSet templates = ctx.Templates();
  tagging::TaggingOptions options;
  if (!o.inpainted.empty()) options.inpainted_dir = o.inpainted;
  tagging::TaggingPipeline pipeline(*gw, templates, options);
  tagging::SummaryStore summaries = tagging::SummaryStore::Load(o.summaries);
  auto task = o.task == "tags" ? tagging::FinetuneTask::kTags : tagging::FinetuneTask::kSummary;
  auto report = tagging::ExportFinetuneData(c, summaries, task, pipeline,
                                            run.Output("finetune_" + o.task + ".jsonl"));
  run.Templates(templates);
  run.Gateway(*gw);
  run.Set("task", o.task);
  run.Set("exported", report.exported);
  run.Set("skipped_missing_summary", report.skipped_missing_summary);
  run.Set("skipped_not_train", report.skipped_not_train);
  ReportWarnings(ctx, run, *gw);
  run.Write();
  ctx.out() << fmt::format("exported {}, skipped {} without summary, {} outside train\n",
                           report.exported, report.skipped_missing_summary,
                           report.skipped_not_train);
  return kExitOk;
}

void SplitOption(CLI::App* cmd, std::string* target) {
  cmd->add_option("--split", *target, "Posts to process: train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
}

}  // namespace

void AddTagsCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* tags = app.add_subcommand("tags", "Lens cleaning, summaries and tag prediction");
  tags->require_subcommand(1);

  auto lens = std::make_shared<CleanLensOptions>();
  CLI::App* cmd = Leaf(*tags, "clean-lens", "Fill lens_context_clean from the raw web context",
                       action, [&ctx, lens] { return CleanLens(ctx, *lens); });
  cmd->add_option("--manifest", lens->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", lens->out, "Output directory")->required();

  auto expand = std::make_shared<ExpandOptions>();
  cmd = Leaf(*tags, "expand", "Search-snippet expansion for every distinct tag", action,
             [&ctx, expand] { return Expand(ctx, *expand); });
  cmd->add_option("--manifest", expand->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", expand->out, "Output directory")->required();
  SplitOption(cmd, &expand->split);

  auto gt = std::make_shared<SummaryOptions>();
  cmd = Leaf(*tags, "gt-summary", "Teacher summaries that weave in every gold tag", action,
             [&ctx, gt] { return GroundTruthSummaries(ctx, *gt); });
  cmd->add_option("--manifest", gt->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", gt->out, "Output directory")->required();
  SplitOption(cmd, &gt->split);
  cmd->add_option("--inpainted", gt->inpainted, "Directory of text-free images");
  cmd->add_flag("--no-expand", gt->no_expand, "Leave tag expansions out of the prompt");

  auto predict = std::make_shared<SummaryOptions>();
  predict->split = "all";
  cmd = Leaf(*tags, "predict", "Tagless summary, then tag extraction", action,
             [&ctx, predict] { return Predict(ctx, *predict); });
  cmd->add_option("--manifest", predict->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", predict->out, "Output directory")->required();
  SplitOption(cmd, &predict->split);
  cmd->add_option("--inpainted", predict->inpainted, "Directory of text-free images");
  cmd->add_option("--stoplist", predict->stoplist, "Tags never emitted")
      ->check(CLI::ExistingFile);

  auto exp = std::make_shared<ExportOptions>();
  cmd = Leaf(*tags, "export-finetune", "Train-split {input, target} records", action,
             [&ctx, exp] { return ExportFinetune(ctx, *exp); });
  cmd->add_option("--manifest", exp->manifest, "Manifest file or directory")->required();
  cmd->add_option("--summaries", exp->summaries, "Ground-truth summaries (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--task", exp->task, "summary or tags")
      ->check(CLI::IsMember({"summary", "tags"}))
      ->capture_default_str();
  cmd->add_option("--out", exp->out, "Output directory")->required();
  cmd->add_option("--inpainted", exp->inpainted, "Directory of text-free images");
}

}  // namespace memeguard::cli
