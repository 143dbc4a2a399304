#include <fmt/format.h>

#include "internal.h"
#include "memeguard/annotation/store.h"
#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/parallel.h"
#include "memeguard/common/text.h"
#include "memeguard/detect/detect.h"
#include "memeguard/exemplar/exemplar.h"
#include "memeguard/metrics/analysis.h"
#include "memeguard/metrics/tag_similarity.h"
#include "memeguard/metrics/text_metrics.h"
#include "memeguard/tagging/pipeline.h"

namespace memeguard::cli {
namespace {

using nlohmann::json;

std::string Cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return Fixed(v.get<double>(), 4);
  if (v.is_null()) return "-";
  return v.dump();
}

// Prints `records` as an aligned table over `columns`, or one JSON object
// per line.
void Emit(Context& ctx, const std::vector<std::string>& columns, const std::vector<json>& records) {
  if (ctx.OutputFormat() == Format::kRecords) {
    for (const auto& r : records) ctx.out() << r.dump() << '\n';
    return;
  }
  std::vector<std::vector<std::string>> rows = {columns};
  for (const auto& r : records) {
    std::vector<std::string> row;
    for (const auto& c : columns) row.push_back(r.contains(c) ? Cell(r[c]) : "");
    rows.push_back(std::move(row));
  }
  ctx.out() << FormatTable(rows);
}

// Optional --out: writes the full report plus a run manifest.
void MaybeWriteReport(Context& ctx, const std::string& out, const std::string& command,
                      const json& report, gateway::ModelGateway* gw = nullptr) {
  if (out.empty()) return;
  RunManifest run(ctx, command, out);
  WriteFileAtomic(run.Output("report.json"), report.dump(2) + "\n");
  if (gw) run.Gateway(*gw);
  run.Write();
}

std::map<std::string, std::vector<std::string>> GoldTags(const corpus::Corpus& c,
                                                         const std::string& split) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& p : c.records) {
    if (split == "all" || (p.split && ToString(*p.split) == split)) out[p.id] = p.tags;
  }
  return out;
}

struct TagsOptions {
  std::string manifest;
  std::string generated;
  std::string method = "semantic";
  bool expanded = false;
  std::string split = "test";
  std::string out;
};

int EvalTags(Context& ctx, const TagsOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  auto gen = exemplar::LoadPredictedTags(o.generated);
  auto gt = GoldTags(c, o.split);
  auto gw = ctx.MakeGateway();
  metrics::TagSimilarityScorer scorer(*gw);
  auto report = scorer.Evaluate(gt, gen, *metrics::ParseTagSimMethod(o.method), o.expanded,
                                ctx.workers);
  for (const auto& w : report.warnings) ctx.err() << "warning: " << w << '\n';
  std::vector<json> rows;
  for (const auto& [id, score] : report.per_post) rows.push_back({{"id", id}, {"score", score}});
  rows.push_back({{"id", "mean"}, {"score", report.mean}});
  Emit(ctx, {"id", "score"}, rows);
  MaybeWriteReport(ctx, o.out, "eval tags", report.ToJson(), gw.get());
  return kExitOk;
}

struct SummariesOptions {
  std::string references;
  std::string candidates;
  std::string metrics = "bleu,chrf,meteor,rouge_l";
  std::string out;
};

int EvalSummaries(Context& ctx, const SummariesOptions& o) {
  auto refs = tagging::SummaryStore::Load(o.references);
  auto cands = tagging::SummaryStore::Load(o.candidates);
  std::vector<std::string> wanted;
  for (auto& m : text::SplitAny(o.metrics, ",")) {
    m = text::Trim(m);
    if (m.empty()) continue;
    static const std::set<std::string> kKnown = {"bleu", "chrf", "meteor", "rouge_l", "sbert"};
    if (!kKnown.count(m)) throw ValidationError("unknown metric '" + m + "'");
    wanted.push_back(m);
  }
  if (wanted.empty()) throw ValidationError("no metrics selected");
  std::unique_ptr<gateway::ModelGateway> gw;
  if (std::find(wanted.begin(), wanted.end(), "sbert") != wanted.end()) gw = ctx.MakeGateway();

  std::vector<std::pair<std::string, std::string>> pairs;  // candidate, reference
  std::vector<std::string> ids;
  size_t missing = 0;
  for (const auto& ref : refs.All()) {
    if (ref.kind != tagging::SummaryKind::kGroundTruth) continue;
    auto cand = cands.Get(ref.post_id, tagging::SummaryKind::kGenerated);
    if (!cand) {
      ++missing;
      continue;
    }
    ids.push_back(ref.post_id);
    pairs.push_back({cand->text, ref.text});
  }
  if (pairs.empty())
    throw ValidationError("no post has both a ground-truth and a generated summary");
  if (missing > 0)
    ctx.err() << fmt::format("warning: {} posts lack a generated summary\n", missing);

  std::vector<std::map<std::string, double>> scores(pairs.size());
  ParallelFor(pairs.size(), ctx.workers, [&](size_t i) {
    const auto& [cand, ref] = pairs[i];
    for (const auto& m : wanted) {
      double v = 0.0;
      if (m == "bleu") v = metrics::Bleu(cand, ref);
      if (m == "chrf") v = metrics::ChrF(cand, ref);
      if (m == "meteor") v = metrics::MeteorLite(cand, ref);
      if (m == "rouge_l") v = metrics::RougeL(cand, ref);
      if (m == "sbert") v = metrics::SbertCosine(*gw, cand, ref);
      scores[i][m] = v;
    }
  });
  std::vector<json> rows;
  std::map<std::string, double> mean;
  for (size_t i = 0; i < ids.size(); ++i) {
    json row = {{"id", ids[i]}};
    for (const auto& [m, v] : scores[i]) {
      row[m] = v;
      mean[m] += v / static_cast<double>(ids.size());
    }
    rows.push_back(row);
  }
  json mean_row = {{"id", "mean"}};
  for (const auto& [m, v] : mean) mean_row[m] = v;
  rows.push_back(mean_row);
  std::vector<std::string> columns = {"id"};
  columns.insert(columns.end(), wanted.begin(), wanted.end());
  Emit(ctx, columns, rows);
  json report = {{"metrics", wanted}, {"mean", mean}, {"n", ids.size()}, {"missing", missing}};
  json per_post = json::object();
  for (size_t i = 0; i < ids.size(); ++i) per_post[ids[i]] = scores[i];
  report["per_post"] = per_post;
  MaybeWriteReport(ctx, o.out, "eval summaries", report, gw.get());
  return kExitOk;
}

struct AgreementOptions {
  std::string records;
  std::vector<std::string> stages = {"I", "II"};
  std::string out;
};

int EvalAgreement(Context& ctx, const AgreementOptions& o) {
  auto records = annotation::LoadAnnotationRecords(o.records);
  std::vector<json> rows;
  json report = json::object();
  for (const auto& s : o.stages) {
    Stage stage = *ParseStage(s);
    auto a = annotation::AgreementFromRecords(records, stage);
    rows.push_back({{"stage", s},
                    {"kappa", a.kappa},
                    {"p_bar", a.p_bar},
                    {"p_e", a.p_e},
                    {"items", a.n_items},
                    {"raters", a.n_raters}});
    report[s] = a.ToJson(AssignableLabels(stage));
  }
  Emit(ctx, {"stage", "kappa", "p_bar", "p_e", "items", "raters"}, rows);
  MaybeWriteReport(ctx, o.out, "eval agreement", report);
  return kExitOk;
}

struct CooccurOptions {
  std::string manifest;
  size_t min_count = 1;
  size_t top = 30;
  std::string label = "all";
};

int EvalCooccur(Context& ctx, const CooccurOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  if (o.label != "all") {
    corpus::Corpus filtered{c.base_dir, {}};
    for (const auto& p : c.records) {
      if (metrics::HasLabel(p, o.label)) filtered.records.push_back(p);
    }
    c = std::move(filtered);
  }
  auto pairs = metrics::Cooccurrence(c, o.min_count);
  if (o.top > 0 && pairs.size() > o.top) pairs.resize(o.top);
  std::vector<json> rows;
  for (const auto& p : pairs) rows.push_back({{"a", p.a}, {"b", p.b}, {"count", p.count}});
  Emit(ctx, {"a", "b", "count"}, rows);
  return kExitOk;
}

struct TopTagsOptions {
  std::string manifest;
  std::string label = "toxic";
  size_t n = 30;
};

int EvalTopTags(Context& ctx, const TopTagsOptions& o) {
  corpus::Corpus c = LoadCorpusOrThrow(o.manifest, ctx);
  std::vector<json> rows;
  for (const auto& [tag, count] : metrics::TopTags(c, o.label, o.n)) {
    rows.push_back({{"tag", tag}, {"count", count}});
  }
  Emit(ctx, {"tag", "count"}, rows);
  return kExitOk;
}

struct PredictionsOptions {
  std::string predictions;
  std::string policy;
};

int EvalPredictions(Context& ctx, const PredictionsOptions& o) {
  json header;
  auto records = detect::ReadPredictionFile(o.predictions, &header);
  const json& config = header.at("config");
  auto space = detect::LabelSpaceByName(config.at("stage").get<std::string>());
  std::string policy =
      o.policy.empty() ? config.at("unparseable_policy").get<std::string>() : o.policy;
  auto report = detect::ScorePredictions(records, space, *detect::ParseUnparseablePolicy(policy));
  std::vector<json> rows;
  for (const auto& [label, s] : report.per_class) {
    rows.push_back({{"class", label},
                    {"precision", 100 * s.precision},
                    {"recall", 100 * s.recall},
                    {"f1", 100 * s.f1},
                    {"support", s.support}});
  }
  rows.push_back({{"class", "macro"}, {"f1", report.macro_f1}, {"support", report.n}});
  Emit(ctx, {"class", "precision", "recall", "f1", "support"}, rows);
  return kExitOk;
}

}  // namespace

void AddEvalCommands(CLI::App& app, Context& ctx, Action* action) {
  CLI::App* ev = app.add_subcommand("eval", "Metrics and corpus analyses");
  ev->require_subcommand(1);

  auto tags = std::make_shared<TagsOptions>();
  CLI::App* cmd = Leaf(*ev, "tags", "Mean-of-max tag-set similarity against gold tags", action,
                       [&ctx, tags] { return EvalTags(ctx, *tags); });
  cmd->add_option("--manifest", tags->manifest, "Manifest with gold tags")->required();
  cmd->add_option("--generated", tags->generated, "Predicted tags (JSONL {id, tags})")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--method", tags->method, "semantic, token_f1 or conceptnet")
      ->check(CLI::IsMember({"semantic", "token_f1", "conceptnet"}))
      ->capture_default_str();
  cmd->add_flag("--expanded", tags->expanded, "Compare search expansions instead of tags");
  cmd->add_option("--split", tags->split, "Gold posts to score: train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}))
      ->capture_default_str();
  cmd->add_option("--out", tags->out, "Also write report.json here");

  auto sums = std::make_shared<SummariesOptions>();
  cmd = Leaf(*ev, "summaries", "BLEU, chrF, METEOR, ROUGE-L and S-BERT of generated summaries",
             action, [&ctx, sums] { return EvalSummaries(ctx, *sums); });
  cmd->add_option("--references", sums->references, "Ground-truth summaries (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--candidates", sums->candidates, "Generated summaries (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--metrics", sums->metrics,
                  "Comma list of bleu, chrf, meteor, rouge_l, sbert (sbert calls the embedder)")
      ->capture_default_str();
  cmd->add_option("--out", sums->out, "Also write report.json here");

  auto agree = std::make_shared<AgreementOptions>();
  cmd = Leaf(*ev, "agreement", "Fleiss' kappa from annotation records", action,
             [&ctx, agree] { return EvalAgreement(ctx, *agree); });
  cmd->add_option("--records", agree->records, "Annotation records (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--stage", agree->stages, "I and/or II")
      ->check(CLI::IsMember({"I", "II"}))
      ->capture_default_str();
  cmd->add_option("--out", agree->out, "Also write report.json here");

  auto co = std::make_shared<CooccurOptions>();
  cmd = Leaf(*ev, "cooccur", "Ranked co-occurring lemmatized tag pairs", action,
             [&ctx, co] { return EvalCooccur(ctx, *co); });
  cmd->add_option("--manifest", co->manifest, "Manifest file or directory")->required();
  cmd->add_option("--min-count", co->min_count, "Drop rarer pairs")->capture_default_str();
  cmd->add_option("--top", co->top, "Pairs to print (0 = all)")->capture_default_str();
  cmd->add_option("--label", co->label, "Restrict to posts with this label")->capture_default_str();

  auto top = std::make_shared<TopTagsOptions>();
  cmd = Leaf(*ev, "top-tags", "Most frequent tags in one class", action,
             [&ctx, top] { return EvalTopTags(ctx, *top); });
  cmd->add_option("--manifest", top->manifest, "Manifest file or directory")->required();
  cmd->add_option("--label", top->label, "toxic, normal, hateful, dangerous, offensive or all")
      ->capture_default_str();
  cmd->add_option("--n", top->n, "Tags to print (0 = all)")->capture_default_str();

  auto pred = std::make_shared<PredictionsOptions>();
  cmd = Leaf(*ev, "predictions", "Rescore a detect run prediction file", action,
             [&ctx, pred] { return EvalPredictions(ctx, *pred); });
  cmd->add_option("--predictions", pred->predictions, "predictions.jsonl from detect run")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--policy", pred->policy, "Override the run's unparseable policy")
      ->check(CLI::IsMember({"strict", "drop"}));
}

}  // namespace memeguard::cli
