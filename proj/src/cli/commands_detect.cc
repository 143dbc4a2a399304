#include <fmt/format.h>

#include "internal.h"
#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/random.h"
#include "memeguard/detect/detect.h"

namespace memeguard::cli {
namespace {

using nlohmann::json;

struct DetectOptions {
  std::string manifest;
  std::string pool;  // defaults to manifest
  std::string stage = "I";
  std::string strategy = "random";
  int k = 4;
  std::optional<double> alpha;
  uint64_t seed = 0;
  std::string predicted;
  std::string policy = "strict";
  std::string prompt_tags = "auto";
  std::string model;
  std::string out;
  // tune-alpha only
  size_t val_size = 100;
};

detect::DetectionConfig MakeConfig(const Context& ctx, const DetectOptions& o,
                                   const gateway::GatewayConfig& gw) {
  detect::DetectionConfig config;
  config.space = detect::LabelSpaceByName(o.stage);
  auto kind = exemplar::ParseStrategyKind(o.strategy);
  if (!kind) throw ValidationError("unknown strategy '" + o.strategy + "'");
  config.strategy.kind = *kind;
  config.strategy.k = o.k;
  config.strategy.alpha = o.alpha;
  config.strategy.seed = o.seed;
  config.policy = *detect::ParseUnparseablePolicy(o.policy);
  config.prompt_tags = *detect::ParsePromptTags(o.prompt_tags);
  config.model_id = o.model.empty() ? gw.Model("classifier") : o.model;
  config.workers = ctx.workers;
  return config;
}

std::optional<exemplar::PredictedTags> MaybePredicted(const DetectOptions& o,
                                                      const detect::DetectionConfig& config) {
  bool needed = exemplar::UsesPredictedTags(config.strategy.kind) ||
                config.prompt_tags == detect::PromptTags::kPredicted;
  if (o.predicted.empty()) {
    if (needed) throw ValidationError("this strategy needs --predicted (output of tags predict)");
    return std::nullopt;
  }
  return exemplar::LoadPredictedTags(o.predicted);
}

std::string ReportTable(const metrics::MetricReport& report) {
  std::vector<std::vector<std::string>> rows = {
      {"class", "precision", "recall", "f1", "support", "predicted"}};
  for (const auto& [label, s] : report.per_class) {
    rows.push_back({label, Fixed(100 * s.precision), Fixed(100 * s.recall), Fixed(100 * s.f1),
                    std::to_string(s.support), std::to_string(s.predicted)});
  }
  return FormatTable(rows) + fmt::format("macro-F1 {}  accuracy {}  n {}\n",
                                         Fixed(report.macro_f1), Fixed(report.accuracy), report.n);
}

int DetectRun(Context& ctx, const DetectOptions& o) {
  corpus::Corpus test = LoadCorpusOrThrow(o.manifest, ctx);
  corpus::Corpus pool_source = o.pool.empty() ? test : LoadCorpusOrThrow(o.pool, ctx);
  RunManifest run(ctx, "detect run", o.out);
  auto gw = ctx.MakeGateway();
  detect::DetectionConfig config = MakeConfig(ctx, o, gw->config());
  config.strategy.Validate();
  auto predicted = MaybePredicted(o, config);
  const exemplar::PredictedTags* predicted_ptr = predicted ? &*predicted : nullptr;
  tagging::TemplateSet templates = ctx.Templates();

  corpus::Corpus pool = detect::EligiblePool(pool_source, config.space);
  exemplar::GatewayEmbeddingSource embeddings(*gw);
  exemplar::ExemplarSelector selector(pool, embeddings, predicted_ptr, &gw->warnings());
  detect::BenchmarkResult result = detect::RunBenchmark(
      *gw, templates, selector, {&test, &pool, predicted_ptr}, config);

  detect::WritePredictionFile(run.Output("predictions.jsonl"), result.header, result.predictions);
  json report = result.report.ToJson();
  report["valid"] = result.valid;
  report["failures"] = result.failures;
  report["unparseable"] = result.unparseable;
  WriteFileAtomic(run.Output("report.json"), report.dump(2) + "\n");

  run.Templates(templates);
  run.Gateway(*gw);
  run.Seed("exemplar", o.seed);
  run.Set("detection", config.ToJson());
  auto warnings = gw->warnings().Snapshot();
  std::sort(warnings.begin(), warnings.end());
  run.Set("warnings", warnings);
  run.Write();

  if (ctx.OutputFormat() == Format::kRecords) {
    ctx.out() << report.dump() << '\n';
  } else {
    ctx.out() << ReportTable(result.report);
  }
  if (!result.valid) {
    ctx.err() << fmt::format("run invalid: {} of {} samples failed\n", result.failures,
                             result.predictions.size());
    return kExitExternal;
  }
  return kExitOk;
}

int TuneAlpha(Context& ctx, const DetectOptions& o) {
  corpus::Corpus source = LoadCorpusOrThrow(o.manifest, ctx);
  RunManifest run(ctx, "exemplar tune-alpha", o.out);
  auto gw = ctx.MakeGateway();
  detect::DetectionConfig config = MakeConfig(ctx, o, gw->config());
  if (!exemplar::IsCombined(config.strategy.kind)) {
    throw ValidationError("tune-alpha needs a combined strategy (image_gt_combined or "
                          "image_pred_combined)");
  }
  auto predicted = MaybePredicted(o, config);
  const exemplar::PredictedTags* predicted_ptr = predicted ? &*predicted : nullptr;
  tagging::TemplateSet templates = ctx.Templates();

  // Validation queries are a seeded sample of the eligible train posts;
  // the rest of the train split is the exemplar pool.
  corpus::Corpus eligible = detect::EligiblePool(source, config.space);
  std::vector<size_t> order(eligible.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  DeterministicRng rng(o.seed);
  rng.Shuffle(order);
  size_t n_val = std::min(o.val_size, eligible.size());
  if (n_val == 0 || n_val == eligible.size()) {
    throw ValidationError(fmt::format("cannot carve {} validation posts from {} eligible posts",
                                      o.val_size, eligible.size()));
  }
  corpus::Corpus val{eligible.base_dir, {}};
  corpus::Corpus pool{eligible.base_dir, {}};
  std::vector<bool> is_val(eligible.size(), false);
  for (size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  for (size_t i = 0; i < eligible.size(); ++i) {
    corpus::PostRecord post = eligible.records[i];
    if (is_val[i]) {
      post.split = Split::kTest;
      val.records.push_back(std::move(post));
    } else {
      pool.records.push_back(std::move(post));
    }
  }

  exemplar::GatewayEmbeddingSource embeddings(*gw);
  exemplar::ExemplarSelector selector(pool, embeddings, predicted_ptr, &gw->warnings());
  exemplar::AlphaTuning tuning = exemplar::TuneAlpha([&](double alpha) {
    detect::DetectionConfig c = config;
    c.strategy.alpha = alpha;
    auto result = detect::RunBenchmark(*gw, templates, selector, {&val, &pool, predicted_ptr}, c);
    if (!result.valid) {
      throw ExternalServiceError(fmt::format("{} of {} samples failed", result.failures,
                                             result.predictions.size()));
    }
    return std::pair{result.report.macro_f1, result.report.n};
  });
  exemplar::WriteAlphaTable(tuning, run.Output("alpha_table.jsonl"));
  run.Templates(templates);
  run.Gateway(*gw);
  run.Seed("validation", o.seed);
  json base = config.ToJson();
  base["strategy"].erase("alpha");
  run.Set("detection", base);
  run.Set("validation_size", n_val);
  run.Set("best_alpha", tuning.best_alpha);
  run.Write();

  if (ctx.OutputFormat() == Format::kRecords) {
    for (const auto& row : tuning.table) {
      ctx.out() << json{{"alpha", row.alpha},
                        {"macro_f1", row.macro_f1 ? json(*row.macro_f1) : json(nullptr)},
                        {"n_eval", row.n_eval}}
                       .dump()
                << '\n';
    }
  } else {
    std::vector<std::vector<std::string>> rows = {{"alpha", "macro_f1", "n_eval"}};
    for (const auto& row : tuning.table) {
      rows.push_back({Fixed(row.alpha, 1), row.macro_f1 ? Fixed(*row.macro_f1) : "invalid",
                      std::to_string(row.n_eval)});
    }
    ctx.out() << FormatTable(rows) << "best alpha " << Fixed(tuning.best_alpha, 1) << '\n';
  }
  return kExitOk;
}

void CommonDetectOptions(CLI::App* cmd, DetectOptions* o) {
  cmd->add_option("--manifest", o->manifest, "Manifest with split and gold labels")->required();
  cmd->add_option("--stage", o->stage, "I, II or fhm")
      ->check(CLI::IsMember({"I", "II", "1", "2", "fhm", "FHM"}))
      ->capture_default_str();
  cmd->add_option("--k", o->k, "Exemplars per prompt")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  cmd->add_option("--seed", o->seed, "Seed for every random draw")->capture_default_str();
  cmd->add_option("--predicted", o->predicted, "Predicted tags (JSONL from tags predict)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--policy", o->policy, "Unparseable answers: strict (wrong) or drop")
      ->check(CLI::IsMember({"strict", "drop"}))
      ->capture_default_str();
  cmd->add_option("--prompt-tags", o->prompt_tags,
                  "Tags shown in prompts: auto, none, gold, predicted")
      ->check(CLI::IsMember({"auto", "none", "gold", "predicted"}))
      ->capture_default_str();
  cmd->add_option("--model", o->model, "Classifier model id (default: model.classifier)");
  cmd->add_option("--out", o->out, "Output directory")->required();
}

}  // namespace

void AddExemplarCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* ex = app.add_subcommand("exemplar", "Exemplar selection utilities");
  ex->require_subcommand(1);
  auto o = std::make_shared<DetectOptions>();
  o->strategy = "image_gt_combined";
  CLI::App* cmd = Leaf(*ex, "tune-alpha", "Grid-search the image/tag mixing weight", action,
                       [&ctx, o] { return TuneAlpha(ctx, *o); });
  CommonDetectOptions(cmd, o.get());
  cmd->add_option("--strategy", o->strategy, "image_gt_combined or image_pred_combined")
      ->check(CLI::IsMember({"image_gt_combined", "image_pred_combined"}))
      ->capture_default_str();
  cmd->add_option("--val-size", o->val_size, "Validation posts drawn from the train split")
      ->capture_default_str();
}

void AddDetectCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* det = app.add_subcommand("detect", "Few-shot classification benchmark");
  det->require_subcommand(1);
  auto o = std::make_shared<DetectOptions>();
  CLI::App* cmd = Leaf(*det, "run", "Classify every eligible test post and score macro-F1",
                       action, [&ctx, o] { return DetectRun(ctx, *o); });
  CommonDetectOptions(cmd, o.get());
  cmd->add_option("--pool", o->pool, "Exemplar pool manifest (default: --manifest)");
  cmd->add_option("--strategy", o->strategy,
                  "random, image, gt_tags, pred_tags, image_gt_combined, image_pred_combined")
      ->check(CLI::IsMember({"random", "image", "gt_tags", "pred_tags", "image_gt_combined",
                             "image_pred_combined"}))
      ->capture_default_str();
  cmd->add_option("--alpha", o->alpha, "Image weight for combined strategies")
      ->check(CLI::Range(0.0, 1.0));
}

}  // namespace memeguard::cli
