#include <fmt/format.h>

#include "internal.h"
#include "memeguard/common/digest.h"

namespace memeguard::cli {
namespace {

using nlohmann::json;

struct IngestOptions {
  std::string manifest;
  std::string out;
  int64_t min_comments = 2;
  std::string stoplist;
};

int Ingest(Context& ctx, const IngestOptions& o) {
  corpus::LoadResult loaded = corpus::LoadCorpus(o.manifest);
  RunManifest run(ctx, "corpus ingest", o.out);
  std::vector<std::string> stoplist;
  if (!o.stoplist.empty()) stoplist = corpus::LoadStoplist(o.stoplist);
  corpus::Corpus filtered = corpus::FilterMinComments(loaded.corpus, o.min_comments);
  corpus::Corpus cleaned = corpus::CleanTags(filtered, stoplist);
  corpus::WriteManifest(cleaned, run.Output("manifest.jsonl"));

  json rejected = json::array();
  for (const auto& e : loaded.errors) {
    rejected.push_back({{"line", e.line_number}, {"error", e.message}});
  }
  json report = {{"read", loaded.corpus.size() + loaded.errors.size()},
                 {"rejected", rejected},
                 {"missing_images", loaded.missing_images},
                 {"below_min_comments", loaded.corpus.size() - filtered.size()},
                 {"kept", cleaned.size()}};
  WriteFileAtomic(run.Output("ingest_report.json"), report.dump(2) + "\n");
  run.Set("min_comments", o.min_comments);
  run.Set("stoplist", o.stoplist.empty() ? json(nullptr) : json(Sha256FileHex(o.stoplist)));
  run.Write();
  ctx.out() << fmt::format("kept {} of {} posts ({} rejected lines, {} below {} comments)\n",
                           cleaned.size(), report["read"].get<size_t>(), loaded.errors.size(),
                           report["below_min_comments"].get<size_t>(), o.min_comments);
  return kExitOk;
}

struct DedupOptions {
  std::string manifest;
  std::string out;
  int threshold = 0;
};

int Dedup(Context& ctx, const DedupOptions& o) {
  corpus::Corpus input = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "corpus dedup", o.out);
  auto groups = corpus::DedupExact(input);
  corpus::DedupResult result = corpus::DedupPerceptual(input, groups, o.threshold);
  corpus::WriteManifest(result.corpus, run.Output("manifest.jsonl"));
  json group_ids = json::array();
  for (const auto& g : groups) group_ids.push_back(g.ids);
  json report = {{"candidate_groups", group_ids},
                 {"dropped", result.dropped_ids},
                 {"unreadable", result.unreadable_ids},
                 {"threshold", o.threshold}};
  WriteFileAtomic(run.Output("dedup_report.json"), report.dump(2) + "\n");
  run.Set("threshold", o.threshold);
  run.Write();
  ctx.out() << fmt::format("{} candidate groups, {} posts dropped, {} kept\n", groups.size(),
                           result.dropped_ids.size(), result.corpus.size());
  return kExitOk;
}

struct SplitOptions {
  std::string manifest;
  std::string out;
  corpus::SplitOptions split;
};

int RunSplit(Context& ctx, const SplitOptions& o) {
  corpus::Corpus input = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "corpus split", o.out);
  corpus::Corpus split = corpus::SplitTrainTest(input, o.split);
  corpus::WriteManifest(split, run.Output("manifest.jsonl"));
  run.Seed("split", o.split.seed);
  run.Set("test_size", o.split.test_size);
  run.Set("coverage", o.split.coverage);
  run.Set("min_tag_occurrences", o.split.min_tag_occurrences);
  run.Write();
  size_t test = 0;
  for (const auto& p : split.records) test += p.split == Split::kTest;
  ctx.out() << fmt::format("train {}  test {}\n", split.size() - test, test);
  return kExitOk;
}

int Stats(Context& ctx, const std::string& manifest) {
  corpus::CorpusStats stats = corpus::ComputeStats(LoadCorpusOrThrow(manifest, ctx));
  if (ctx.OutputFormat() == Format::kTable) {
    ctx.out() << corpus::FormatStatsTable(stats);
    return kExitOk;
  }
  for (const std::string& row : corpus::StatsRowOrder()) {
    const auto& c = stats.by_label.at(row);
    ctx.out() << json{{"label", row}, {"train", c.train}, {"test", c.test}, {"total", c.total}}
                     .dump()
              << '\n';
  }
  ctx.out() << json{{"label", "total"},
                    {"train", stats.all.train},
                    {"test", stats.all.test},
                    {"total", stats.all.total}}
                   .dump()
            << '\n';
  return kExitOk;
}

}  // namespace

void AddCorpusCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* corpus = app.add_subcommand("corpus", "Load, clean, deduplicate and split posts");
  corpus->require_subcommand(1);

  auto ingest = std::make_shared<IngestOptions>();
  CLI::App* cmd =
      Leaf(*corpus, "ingest", "Validate a manifest, drop low-engagement posts, clean tags", action,
           [&ctx, ingest] { return Ingest(ctx, *ingest); });
  cmd->add_option("--manifest", ingest->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", ingest->out, "Output directory")->required();
  cmd->add_option("--min-comments", ingest->min_comments, "Minimum comment count")
      ->capture_default_str();
  cmd->add_option("--stoplist", ingest->stoplist, "Tag stoplist, one per line")
      ->check(CLI::ExistingFile);

  auto dedup = std::make_shared<DedupOptions>();
  cmd = Leaf(*corpus, "dedup", "Exact title/tag match, then perceptual hash inside each group",
             action, [&ctx, dedup] { return Dedup(ctx, *dedup); });
  cmd->add_option("--manifest", dedup->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", dedup->out, "Output directory")->required();
  cmd->add_option("--threshold", dedup->threshold, "Maximum Hamming distance for duplicates")
      ->capture_default_str()
      ->check(CLI::Range(0, 64));

  auto split = std::make_shared<SplitOptions>();
  cmd = Leaf(*corpus, "split", "Assign train/test with per-tag test coverage", action,
             [&ctx, split] { return RunSplit(ctx, *split); });
  cmd->add_option("--manifest", split->manifest, "Manifest file or directory")->required();
  cmd->add_option("--out", split->out, "Output directory")->required();
  cmd->add_option("--test-size", split->split.test_size, "Posts in the test split")
      ->capture_default_str();
  cmd->add_option("--coverage", split->split.coverage, "Per-tag minimum test share")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--min-tag-occurrences", split->split.min_tag_occurrences,
                  "Tags rarer than this have no coverage quota")->capture_default_str();
  cmd->add_option("--seed", split->split.seed, "Shuffle seed")->capture_default_str();

  auto manifest = std::make_shared<std::string>();
  cmd = Leaf(*corpus, "stats", "Per-label counts by split", action,
             [&ctx, manifest] { return Stats(ctx, *manifest); });
  cmd->add_option("--manifest", *manifest, "Manifest file or directory")->required();
}

}  // namespace memeguard::cli
