#include <fmt/format.h>

#include "internal.h"
#include "memeguard/annotation/server.h"
#include "memeguard/annotation/store.h"
#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/text.h"
#include "memeguard/tagging/pipeline.h"

namespace memeguard::cli {
namespace {

using nlohmann::json;

struct StoreFlags {
  std::string db;
  int utc_offset = 0;

  std::unique_ptr<annotation::AnnotationStore> Open() const {
    annotation::StoreOptions options;
    options.utc_offset_minutes = utc_offset;
    return std::make_unique<annotation::AnnotationStore>(db, options);
  }
};

void AddStoreFlags(CLI::App* cmd, StoreFlags* f) {
  cmd->add_option("--db", f->db, "Annotation database file")->required();
  cmd->add_option("--utc-offset", f->utc_offset, "Service-local day offset from UTC, minutes")
      ->check(CLI::Range(-14 * 60, 14 * 60))
      ->capture_default_str();
}

Stage StageOf(const std::string& s) {
  auto stage = ParseStage(s);
  if (!stage) throw ValidationError("stage must be I or II");
  return *stage;
}

void Import(annotation::AnnotationStore& store, const std::string& manifest,
            const std::string& summaries, Context& ctx) {
  if (!manifest.empty()) {
    corpus::Corpus c = LoadCorpusOrThrow(manifest, ctx);
    store.ImportSamples(c);
    ctx.out() << fmt::format("imported {} samples\n", c.size());
  }
  if (!summaries.empty()) {
    size_t n = 0;
    for (const auto& s : tagging::SummaryStore::Load(summaries).All()) {
      if (s.kind != tagging::SummaryKind::kGroundTruth) continue;
      store.SetSummary(s.post_id, s.text);
      ++n;
    }
    ctx.out() << fmt::format("attached {} ground-truth summaries\n", n);
  }
}

struct ServeOptions {
  StoreFlags store;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string manifest;
  std::string summaries;
};

int Serve(Context& ctx, const ServeOptions& o) {
  auto store = o.store.Open();
  Import(*store, o.manifest, o.summaries, ctx);
  annotation::ServerOptions options = annotation::ServerOptions::FromEnv();
  options.threads = ctx.workers;
  if (options.admin_token.empty()) {
    ctx.err() << "warning: MEMEGUARD_ADMIN_TOKEN is unset; admin endpoints are disabled\n";
  }
  annotation::AnnotationServer server(*store, options);
  int port = server.Bind(o.host, o.port);
  if (port < 0) throw ValidationError(fmt::format("cannot bind {}:{}", o.host, o.port));
  ctx.out() << fmt::format("listening on http://{}:{}\n", o.host, port) << std::flush;
  return server.Listen() ? kExitOk : kExitValidation;
}

struct ImportOptions {
  StoreFlags store;
  std::string manifest;
  std::string summaries;
};

struct AnnotatorOptions {
  StoreFlags store;
  annotation::AnnotatorProfile profile;
};

struct BatchOptions {
  StoreFlags store;
  std::string stage = "I";
  std::string assignments;
  std::vector<std::string> annotators;
  std::string manifest;
};

// Sample i goes to annotators 3i, 3i+1, 3i+2 (mod m): every annotator ends
// up within one task of every other.
std::vector<annotation::Assignment> RoundRobin(const std::vector<std::string>& samples,
                                               const std::vector<std::string>& annotators) {
  if (annotators.size() < 3) throw ValidationError("need at least three annotators");
  std::vector<annotation::Assignment> out;
  size_t m = annotators.size();
  for (size_t i = 0; i < samples.size(); ++i) {
    out.push_back({samples[i],
                   {annotators[(3 * i) % m], annotators[(3 * i + 1) % m],
                    annotators[(3 * i + 2) % m]}});
  }
  return out;
}

int Batch(Context& ctx, const BatchOptions& o) {
  auto store = o.store.Open();
  Stage stage = StageOf(o.stage);
  std::vector<annotation::Assignment> assignments;
  if (!o.assignments.empty()) {
    auto errors = jsonl::ForEachRecord(o.assignments, [&](size_t, const json& j) {
      assignments.push_back({j.at("sample").get<std::string>(),
                             j.at("annotators").get<std::vector<std::string>>()});
    });
    if (!errors.empty()) {
      throw ValidationError(fmt::format("{}:{}: {}", o.assignments, errors[0].line_number,
                                        errors[0].message));
    }
  } else {
    if (o.manifest.empty() || o.annotators.empty()) {
      throw ValidationError("give --assignments, or --manifest with --annotators");
    }
    corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
    auto toxic = store->FinalLabels(Stage::kI);
    std::vector<std::string> samples;
    for (const auto& p : c.records) {
      if (stage == Stage::kII) {
        auto it = toxic.find(p.id);
        if (it == toxic.end() || it->second != "toxic") continue;
      }
      samples.push_back(p.id);
    }
    std::sort(samples.begin(), samples.end());
    assignments = RoundRobin(samples, o.annotators);
  }
  auto report = store->CreateBatch(stage, assignments);
  if (ctx.OutputFormat() == Format::kRecords) {
    ctx.out() << report.ToJson().dump() << '\n';
  } else {
    std::vector<std::vector<std::string>> rows = {{"annotator", "tasks"}};
    for (const auto& [a, n] : report.per_annotator) rows.push_back({a, std::to_string(n)});
    ctx.out() << fmt::format("batch {} (stage {}): {} tasks, load spread {}\n", report.batch_id,
                             ToString(stage), report.n_tasks, report.load_spread)
              << FormatTable(rows);
  }
  return kExitOk;
}

struct FinalizeOptions {
  StoreFlags store;
  std::string stage = "I";
  std::string manifest;
  std::string out;
};

int Finalize(Context& ctx, const FinalizeOptions& o) {
  auto store = o.store.Open();
  auto result = store->FinalizeLabels(StageOf(o.stage));
  if (!result.blocked.empty()) {
    ctx.err() << fmt::format("finalization blocked; samples without three records: {}\n",
                             text::Join(result.blocked, ", "));
    return kExitValidation;
  }
  std::map<std::string, size_t> counts;
  for (const auto& [id, label] : result.labels) ++counts[label];
  std::vector<std::vector<std::string>> rows = {{"label", "samples"}};
  for (const auto& [label, n] : counts) rows.push_back({label, std::to_string(n)});
  if (ctx.OutputFormat() == Format::kRecords) {
    ctx.out() << result.ToJson().dump() << '\n';
  } else {
    ctx.out() << FormatTable(rows);
  }
  if (!o.manifest.empty()) {
    if (o.out.empty()) throw ValidationError("--manifest needs --out");
    corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
    RunManifest run(ctx, "annotate finalize", o.out);
    corpus::WriteManifest(store->ApplyFinalLabels(c), run.Output("manifest.jsonl"));
    WriteFileAtomic(run.Output("finalize.json"), result.ToJson().dump(2) + "\n");
    run.Set("stage", o.stage);
    run.Write();
  }
  return kExitOk;
}

struct ExportOptions {
  StoreFlags store;
  std::string out;
};

int Export(Context& ctx, const ExportOptions& o) {
  auto store = o.store.Open();
  RunManifest run(ctx, "annotate export", o.out);
  std::vector<json> lines;
  for (const auto& r : store->Records()) lines.push_back(r.ToJson());
  jsonl::WriteFile(run.Output("records.jsonl"), lines);
  run.Write();
  ctx.out() << fmt::format("exported {} annotation records\n", lines.size());
  return kExitOk;
}

}  // namespace

void AddAnnotateCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* an = app.add_subcommand("annotate", "Annotation service and administration");
  an->require_subcommand(1);

  auto serve = std::make_shared<ServeOptions>();
  CLI::App* cmd = Leaf(*an, "serve", "Run the annotation HTTP service", action,
                       [&ctx, serve] { return Serve(ctx, *serve); });
  AddStoreFlags(cmd, &serve->store);
  cmd->add_option("--host", serve->host, "Bind address")->capture_default_str();
  cmd->add_option("--port", serve->port, "Port (0 picks a free one)")->capture_default_str();
  cmd->add_option("--manifest", serve->manifest, "Import these posts as samples first");
  cmd->add_option("--summaries", serve->summaries, "Attach ground-truth summaries for rating");

  auto imp = std::make_shared<ImportOptions>();
  cmd = Leaf(*an, "import", "Register posts and summaries as samples", action, [&ctx, imp] {
    auto store = imp->store.Open();
    Import(*store, imp->manifest, imp->summaries, ctx);
    return kExitOk;
  });
  AddStoreFlags(cmd, &imp->store);
  cmd->add_option("--manifest", imp->manifest, "Manifest file or directory");
  cmd->add_option("--summaries", imp->summaries, "Ground-truth summaries (JSONL)");

  auto ann = std::make_shared<AnnotatorOptions>();
  cmd = Leaf(*an, "add-annotator", "Register an annotator", action, [&ctx, ann] {
    if (ann->profile.handle.empty()) ann->profile.handle = ann->profile.id;
    ann->store.Open()->AddAnnotator(ann->profile);
    ctx.out() << "added " << ann->profile.id << '\n';
    return kExitOk;
  });
  AddStoreFlags(cmd, &ann->store);
  cmd->add_option("--id", ann->profile.id, "Annotator id")->required();
  cmd->add_option("--handle", ann->profile.handle, "Display name (not a platform username)");
  cmd->add_option("--daily-cap", ann->profile.daily_cap, "Submissions per day")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto batch = std::make_shared<BatchOptions>();
  cmd = Leaf(*an, "batch", "Assign samples to three annotators each", action,
             [&ctx, batch] { return Batch(ctx, *batch); });
  AddStoreFlags(cmd, &batch->store);
  cmd->add_option("--stage", batch->stage, "I or II")
      ->check(CLI::IsMember({"I", "II"}))
      ->capture_default_str();
  cmd->add_option("--assignments", batch->assignments, "JSONL {sample, annotators[3]}")
      ->check(CLI::ExistingFile);
  cmd->add_option("--annotators", batch->annotators, "Annotator ids for round-robin assignment")
      ->delimiter(',');
  cmd->add_option("--manifest", batch->manifest, "Samples for round-robin assignment");

  auto fin = std::make_shared<FinalizeOptions>();
  cmd = Leaf(*an, "finalize", "Majority-vote final labels for a stage", action,
             [&ctx, fin] { return Finalize(ctx, *fin); });
  AddStoreFlags(cmd, &fin->store);
  cmd->add_option("--stage", fin->stage, "I or II")
      ->check(CLI::IsMember({"I", "II"}))
      ->capture_default_str();
  cmd->add_option("--manifest", fin->manifest, "Write this manifest with final labels applied");
  cmd->add_option("--out", fin->out, "Output directory for the labeled manifest");

  auto exp = std::make_shared<ExportOptions>();
  cmd = Leaf(*an, "export", "Write all annotation records as JSONL", action,
             [&ctx, exp] { return Export(ctx, *exp); });
  AddStoreFlags(cmd, &exp->store);
  cmd->add_option("--out", exp->out, "Output directory")->required();
}

}  // namespace memeguard::cli
