#include "memeguard/tagging/pipeline.h"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/text.h"
#include "memeguard/tagging/lens.h"

namespace memeguard::tagging {
namespace {

using corpus::Corpus;
using corpus::PostRecord;
using gateway::ChatMessage;
using gateway::ChatRequest;

std::string OrNone(const std::string& s) { return s.empty() ? "(none)" : s; }

std::string LensFor(const PostRecord& post) {
  if (post.lens_context_clean) return *post.lens_context_clean;
  if (post.lens_context_raw) return CleanLensContext(*post.lens_context_raw);
  return "";
}

bool IsQuote(char32_t cp) {
  return cp == '"' || cp == '\'' || cp == '`' || cp == 0x201C || cp == 0x201D ||
         cp == 0x2018 || cp == 0x2019;
}

// "1. foo", "2) foo", "- foo", "* foo", "• foo" -> "foo"
std::string StripListMarker(std::string s) {
  s = text::Trim(s);
  size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    s = s.substr(i + 1);
  } else if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    s = s.substr(1);
  } else if (s.rfind("\xE2\x80\xA2", 0) == 0) {  // bullet
    s = s.substr(3);
  }
  return text::Trim(s);
}

std::string StripQuotesAndPeriod(const std::string& s) {
  auto cps = text::DecodeUtf8(s);
  while (!cps.empty() && (IsQuote(cps.back()) || cps.back() == '.')) cps.pop_back();
  size_t start = 0;
  while (start < cps.size() && IsQuote(cps[start])) ++start;
  return text::Trim(text::EncodeUtf8({cps.begin() + start, cps.end()}));
}

}  // namespace

std::string_view ToString(SummaryKind kind) {
  return kind == SummaryKind::kGroundTruth ? "ground_truth" : "generated";
}

std::optional<SummaryKind> ParseSummaryKind(std::string_view text) {
  if (text == "ground_truth") return SummaryKind::kGroundTruth;
  if (text == "generated") return SummaryKind::kGenerated;
  return std::nullopt;
}

nlohmann::json SummaryToJson(const SummaryRecord& record) {
  return {{"post_id", record.post_id},
          {"kind", std::string(ToString(record.kind))},
          {"text", record.text},
          {"model_id", record.model_id}};
}

SummaryRecord SummaryFromJson(const nlohmann::json& j) {
  SummaryRecord r;
  try {
    r.post_id = j.at("post_id").get<std::string>();
    auto kind = ParseSummaryKind(j.at("kind").get<std::string>());
    if (!kind) throw ValidationError("unknown summary kind " + j.at("kind").dump());
    r.kind = *kind;
    r.text = j.at("text").get<std::string>();
    r.model_id = j.value("model_id", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad summary record: ") + e.what());
  }
  if (r.text.empty()) throw ValidationError("empty summary for post " + r.post_id);
  return r;
}

SummaryStore SummaryStore::Load(const std::filesystem::path& path) {
  SummaryStore store;
  if (!std::filesystem::exists(path)) return store;
  auto errors = jsonl::ForEachRecord(path, [&](size_t, const nlohmann::json& j) {
    store.Put(SummaryFromJson(j));
  });
  if (!errors.empty()) {
    throw ValidationError(fmt::format("{}:{}: {}", path.string(), errors[0].line_number,
                                      errors[0].message));
  }
  return store;
}

void SummaryStore::Save(const std::filesystem::path& path) const {
  std::vector<nlohmann::json> lines;
  for (const SummaryRecord& r : All()) lines.push_back(SummaryToJson(r));
  jsonl::WriteFile(path, lines);
}

void SummaryStore::Put(const SummaryRecord& record) {
  std::lock_guard<std::mutex> lock(mu_);
  records_[{record.post_id, record.kind}] = record;
}

std::optional<SummaryRecord> SummaryStore::Get(const std::string& post_id,
                                               SummaryKind kind) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = records_.find({post_id, kind});
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

std::vector<SummaryRecord> SummaryStore::All() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<SummaryRecord> out;
  for (const auto& [key, r] : records_) out.push_back(r);
  return out;
}

size_t SummaryStore::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return records_.size();
}

ParsedTags ParseTagList(std::string_view response, const TaggingOptions& options,
                        Warnings* warnings) {
  std::string body = text::Trim(response);
  // Some models prefix the answer ("Tags: a, b").
  if (std::string lower = text::ToLowerAscii(body.substr(0, 10)); lower.rfind("tags:", 0) == 0) {
    body = text::Trim(body.substr(5));
  } else if (lower.rfind("keywords:", 0) == 0) {
    body = text::Trim(body.substr(9));
  }
  ParsedTags result;
  bool has_separator = body.find_first_of(",\n") != std::string::npos;
  if (!has_separator && text::DecodeUtf8(body).size() > options.max_unseparated_chars) {
    result.parseable = false;
    return result;
  }
  std::set<std::string> stop(options.stoplist.begin(), options.stoplist.end());
  std::set<std::string> seen;
  for (const std::string& piece : text::SplitAny(body, ",\n")) {
    std::string tag = text::CollapseWhitespace(StripQuotesAndPeriod(StripListMarker(piece)));
    tag = text::ToLowerAscii(tag);
    if (tag.empty() || stop.count(tag) || seen.count(tag)) continue;
    if (text::DecodeUtf8(tag).size() > options.max_tag_chars) {
      Warn(warnings, fmt::format("dropped over-long tag ({} chars)", tag.size()));
      continue;
    }
    seen.insert(tag);
    result.tags.push_back(std::move(tag));
    if (result.tags.size() == options.max_tags) break;
  }
  return result;
}

std::string RedactTags(std::string text, const std::vector<std::string>& tags) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const std::string& tag : tags) {
      if (text::Trim(tag).empty()) continue;
      while (text::ContainsCaseInsensitive(text, tag)) {
        // Removal (not a placeholder) guarantees progress: each pass shortens
        // the text.
        text = text::ReplaceCaseInsensitive(text, tag, "");
        changed = true;
      }
    }
  }
  return text;
}

TaggingPipeline::TaggingPipeline(gateway::ModelGateway& gateway, const TemplateSet& templates,
                                 TaggingOptions options)
    : gateway_(gateway), templates_(templates), options_(std::move(options)) {}

std::filesystem::path TaggingPipeline::ImageFor(const Corpus& corpus,
                                                const PostRecord& post) const {
  return corpus.ImagePath(post);
}

std::string TaggingPipeline::GenerateCaption(const Corpus& corpus, const PostRecord& post) {
  std::filesystem::path image = ImageFor(corpus, post);
  if (options_.inpainted_dir) {
    std::filesystem::path inpainted = *options_.inpainted_dir / post.image_path;
    if (std::filesystem::exists(inpainted)) {
      image = inpainted;
    } else {
      gateway_.warnings().Add(fmt::format(
          "post {}: no inpainted image at {}, captioning the original", post.id,
          inpainted.string()));
    }
  }
  ChatRequest request;
  request.model_id = gateway_.config().Model("caption");
  request.temperature = options_.temperature;
  request.max_new_tokens = options_.caption_max_tokens;
  request.messages.push_back({"user", templates_.Render("caption", {}), {image}});
  return text::Trim(gateway_.ChatComplete(request).text);
}

EnrichedContext TaggingPipeline::BuildContext(const Corpus& corpus, const PostRecord& post,
                                              bool with_expansions) {
  EnrichedContext ctx;
  ctx.caption = GenerateCaption(corpus, post);
  ctx.lens_clean = LensFor(post);
  if (with_expansions && options_.expand_tags) {
    for (const std::string& tag : post.tags) {
      ctx.tag_expansions[tag] = gateway_.ExpandTag(tag).text;
    }
  }
  return ctx;
}

ChatRequest TaggingPipeline::BuildGroundTruthPrompt(const Corpus& corpus, const PostRecord& post,
                                                    const EnrichedContext& ctx) const {
  if (post.tags.empty()) {
    throw ValidationError("post " + post.id + " has no tags for a ground-truth summary");
  }
  std::vector<std::string> tag_lines, expansion_lines;
  for (const std::string& tag : post.tags) {
    tag_lines.push_back("- " + tag);
    auto it = ctx.tag_expansions.find(tag);
    std::string expansion = it == ctx.tag_expansions.end() ? "" : it->second;
    expansion_lines.push_back("- " + tag + ": " + OrNone(expansion));
  }
  ChatRequest request;
  request.model_id = gateway_.config().Model("teacher");
  request.temperature = options_.temperature;
  request.max_new_tokens = options_.summary_max_tokens;
  std::string prompt = templates_.Render("gt_summary", {{"title", OrNone(post.title)},
                                                        {"ocr", OrNone(post.ocr_text)},
                                                        {"caption", OrNone(ctx.caption)},
                                                        {"tags", text::Join(tag_lines, "\n")},
                                                        {"lens", OrNone(ctx.lens_clean)},
                                                        {"expansions",
                                                         text::Join(expansion_lines, "\n")}});
  request.messages.push_back({"user", prompt, {ImageFor(corpus, post)}});
  return request;
}

ChatRequest TaggingPipeline::BuildTaglessPrompt(const Corpus& corpus, const PostRecord& post,
                                                const EnrichedContext& ctx) const {
  auto clean = [&](const std::string& s) {
    return OrNone(text::CollapseWhitespace(RedactTags(s, post.tags)));
  };
  std::string prompt = templates_.Render("tagless_summary", {{"title", clean(post.title)},
                                                             {"ocr", clean(post.ocr_text)},
                                                             {"caption", clean(ctx.caption)},
                                                             {"lens", clean(ctx.lens_clean)}});
  // A tag can also occur in the template wording itself or straddle a field
  // boundary; the final pass covers both.
  prompt = RedactTags(prompt, post.tags);
  ChatRequest request;
  request.model_id = gateway_.config().Model("summary");
  request.temperature = options_.temperature;
  request.max_new_tokens = options_.summary_max_tokens;
  request.messages.push_back({"user", prompt, {ImageFor(corpus, post)}});
  return request;
}

SummaryRecord TaggingPipeline::GenerateSummary(const Corpus& corpus, const PostRecord& post,
                                               const EnrichedContext& ctx, SummaryKind kind) {
  ChatRequest request = kind == SummaryKind::kGroundTruth
                            ? BuildGroundTruthPrompt(corpus, post, ctx)
                            : BuildTaglessPrompt(corpus, post, ctx);
  std::string text = text::Trim(gateway_.ChatComplete(request).text);
  if (text.empty()) throw ExternalServiceError("empty summary for post " + post.id);
  return {post.id, kind, text, request.model_id};
}

ChatRequest TaggingPipeline::BuildExtractionPrompt(const std::string& summary,
                                                   bool strict) const {
  ChatRequest request;
  request.model_id = gateway_.config().Model("extract");
  request.temperature = options_.temperature;
  request.max_new_tokens = options_.extract_max_tokens;
  request.messages.push_back(
      {"user", templates_.Render(strict ? "extract_tags_strict" : "extract_tags",
                                 {{"summary", summary}}),
       {}});
  return request;
}

std::vector<std::string> TaggingPipeline::ExtractTags(const SummaryRecord& summary) {
  if (text::Trim(summary.text).empty()) {
    throw ValidationError("post " + summary.post_id +
                          ": cannot extract tags from an empty summary");
  }
  Warnings& sink = gateway_.warnings();
  for (bool strict : {false, true}) {
    std::string response = gateway_.ChatComplete(BuildExtractionPrompt(summary.text, strict)).text;
    ParsedTags parsed = ParseTagList(response, options_, &sink);
    if (parsed.parseable && !parsed.tags.empty()) return parsed.tags;
  }
  throw ExternalServiceError("post " + summary.post_id +
                             ": tag extraction returned no usable tags after a strict retry");
}

std::vector<std::string> TaggingPipeline::PredictTags(const Corpus& corpus,
                                                      const PostRecord& post,
                                                      SummaryStore* store) {
  EnrichedContext ctx = BuildContext(corpus, post, /*with_expansions=*/false);
  SummaryRecord summary = GenerateSummary(corpus, post, ctx, SummaryKind::kGenerated);
  if (store != nullptr) store->Put(summary);
  return ExtractTags(summary);
}

ExportReport ExportFinetuneData(const Corpus& corpus, const SummaryStore& summaries,
                                FinetuneTask task, TaggingPipeline& pipeline,
                                const std::filesystem::path& out) {
  ExportReport report;
  std::vector<nlohmann::json> lines;
  for (const PostRecord& post : corpus.records) {
    if (post.split != Split::kTrain) {
      ++report.skipped_not_train;
      continue;
    }
    auto gt = summaries.Get(post.id, SummaryKind::kGroundTruth);
    if (!gt) {
      ++report.skipped_missing_summary;
      pipeline.warnings().Add("post " + post.id + ": no ground-truth summary, not exported");
      continue;
    }
    nlohmann::json line;
    if (task == FinetuneTask::kSummary) {
      EnrichedContext ctx = pipeline.BuildContext(corpus, post, false);
      line["input"] = gateway::RenderChatText(pipeline.BuildTaglessPrompt(corpus, post, ctx));
      line["target"] = gt->text;
    } else {
      line["input"] = gateway::RenderChatText(pipeline.BuildExtractionPrompt(gt->text, false));
      line["target"] = text::Join(post.tags, ", ");
    }
    lines.push_back(std::move(line));
    ++report.exported;
  }
  jsonl::WriteFile(out, lines);
  return report;
}

}  // namespace memeguard::tagging
