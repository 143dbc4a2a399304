#include "memeguard/detect/detect.h"

#include <algorithm>
#include <atomic>
#include <set>

#include <fmt/format.h>

#include "memeguard/common/digest.h"
#include "memeguard/common/errors.h"
#include "memeguard/common/jsonl.h"
#include "memeguard/common/parallel.h"
#include "memeguard/common/text.h"

namespace memeguard::detect {
namespace {

using corpus::Corpus;
using corpus::PostRecord;
using gateway::ChatRequest;

// Lowercase words with every non-alphanumeric byte treated as a separator.
std::vector<std::string> Words(std::string_view s) { return text::WordTokens(s); }

std::string OrNone(const std::string& s) { return s.empty() ? "(none)" : s; }

}  // namespace

std::string LabelSpace::OptionsText() const {
  if (labels.size() == 1) return labels[0];
  std::vector<std::string> head(labels.begin(), labels.end() - 1);
  return text::Join(head, ", ") + " or " + labels.back();
}

LabelSpace StageOneSpace() { return {"I", {"toxic", "normal"}, "detect_stage1"}; }

LabelSpace StageTwoSpace() {
  return {"II", {"hateful", "dangerous", "offensive"}, "detect_stage2"};
}

LabelSpace FhmSpace() { return {"fhm", {"hateful", "not-hateful"}, "detect_fhm"}; }

LabelSpace LabelSpaceByName(std::string_view name) {
  if (name == "I" || name == "1") return StageOneSpace();
  if (name == "II" || name == "2") return StageTwoSpace();
  if (name == "fhm" || name == "FHM") return FhmSpace();
  throw ValidationError("unknown stage '" + std::string(name) + "' (expected I, II or fhm)");
}

std::optional<std::string> GoldLabel(const PostRecord& post, const LabelSpace& space) {
  if (!post.stage1_label) return std::nullopt;
  if (space.name == "I") return std::string(ToString(*post.stage1_label));
  if (space.name == "fhm") {
    return *post.stage1_label == Stage1Label::kToxic ? "hateful" : "not-hateful";
  }
  if (*post.stage1_label != Stage1Label::kToxic || !post.stage2_label ||
      *post.stage2_label == Stage2Label::kUndecided) {
    return std::nullopt;
  }
  return std::string(ToString(*post.stage2_label));
}

Corpus EligiblePool(const Corpus& pool, const LabelSpace& space) {
  Corpus out{pool.base_dir, {}};
  for (const auto& post : pool.records) {
    if (post.split != Split::kTest && GoldLabel(post, space)) out.records.push_back(post);
  }
  return out;
}

ParsedLabel ParseLabel(std::string_view raw, const LabelSpace& space) {
  std::vector<std::string> words = Words(raw);
  std::vector<std::pair<std::vector<std::string>, std::string>> phrases;
  for (const auto& label : space.labels) phrases.push_back({Words(label), label});
  std::stable_sort(phrases.begin(), phrases.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

  std::vector<bool> used(words.size(), false);
  std::set<std::string> found;
  for (const auto& [phrase, label] : phrases) {
    if (phrase.empty() || phrase.size() > words.size()) continue;
    for (size_t i = 0; i + phrase.size() <= words.size(); ++i) {
      bool match = true;
      for (size_t j = 0; j < phrase.size() && match; ++j) {
        match = !used[i + j] && words[i + j] == phrase[j];
      }
      if (!match) continue;
      for (size_t j = 0; j < phrase.size(); ++j) used[i + j] = true;
      found.insert(label);
    }
  }
  if (found.size() == 1) return {*found.begin(), ""};
  if (found.empty()) return {std::nullopt, "no label word in answer"};
  return {std::nullopt, "several labels in answer: " +
                            text::Join(std::vector<std::string>(found.begin(), found.end()), ", ")};
}

std::optional<UnparseablePolicy> ParseUnparseablePolicy(std::string_view text) {
  if (text == "strict") return UnparseablePolicy::kStrict;
  if (text == "drop") return UnparseablePolicy::kDrop;
  return std::nullopt;
}

std::optional<PromptTags> ParsePromptTags(std::string_view text) {
  if (text == "auto") return PromptTags::kAuto;
  if (text == "none") return PromptTags::kNone;
  if (text == "gold") return PromptTags::kGold;
  if (text == "predicted") return PromptTags::kPredicted;
  return std::nullopt;
}

nlohmann::json DetectionConfig::ToJson() const {
  static const char* kTags[] = {"auto", "none", "gold", "predicted"};
  return {{"stage", space.name},
          {"labels", space.labels},
          {"template", space.template_id},
          {"strategy", strategy.ToJson()},
          {"model_id", model_id},
          {"unparseable_policy", policy == UnparseablePolicy::kStrict ? "strict" : "drop"},
          {"prompt_tags", kTags[static_cast<int>(prompt_tags)]},
          {"temperature", temperature},
          {"max_new_tokens", max_new_tokens}};
}

nlohmann::json PredictionRecord::ToJson() const {
  nlohmann::json j = {{"id", post_id},           {"gold", gold},
                      {"predicted", predicted},  {"raw", raw},
                      {"exemplar_ids", exemplar_ids}, {"latency_ms", latency_ms},
                      {"attempts", attempts}};
  if (!error.empty()) j["error"] = error;
  return j;
}

PredictionRecord PredictionRecord::FromJson(const nlohmann::json& j) {
  PredictionRecord r;
  try {
    r.post_id = j.at("id").get<std::string>();
    r.gold = j.at("gold").get<std::string>();
    r.predicted = j.at("predicted").get<std::string>();
    r.raw = j.value("raw", "");
    r.exemplar_ids = j.value("exemplar_ids", std::vector<std::string>{});
    r.latency_ms = j.value("latency_ms", 0.0);
    r.attempts = j.value("attempts", 0);
    r.error = j.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad prediction record: ") + e.what());
  }
  return r;
}

PromptBuilder::PromptBuilder(const tagging::TemplateSet& templates, const DetectionConfig& config,
                             const exemplar::PredictedTags* predicted)
    : templates_(templates), config_(config), predicted_(predicted) {}

bool PromptBuilder::ShowPredictedTags() const {
  switch (config_.prompt_tags) {
    case PromptTags::kPredicted:
      return true;
    case PromptTags::kAuto:
      return exemplar::UsesPredictedTags(config_.strategy.kind);
    default:
      return false;
  }
}

std::string PromptBuilder::RenderItem(const PostRecord& post) const {
  if (config_.prompt_tags == PromptTags::kNone) {
    return templates_.Render("detect_item_notags",
                             {{"title", OrNone(post.title)}, {"ocr", OrNone(post.ocr_text)}});
  }
  const std::vector<std::string>* tags = &post.tags;
  if (ShowPredictedTags()) {
    if (predicted_ == nullptr) throw ValidationError("prompt needs predicted tags; none loaded");
    auto it = predicted_->find(post.id);
    if (it == predicted_->end()) throw ValidationError("no predicted tags for post " + post.id);
    tags = &it->second;
  }
  return templates_.Render("detect_item", {{"title", OrNone(post.title)},
                                           {"ocr", OrNone(post.ocr_text)},
                                           {"tags", OrNone(text::Join(*tags, ", "))}});
}

ChatRequest PromptBuilder::Build(const Corpus& query_corpus, const PostRecord& query,
                                 const Corpus& pool,
                                 const std::vector<std::string>& exemplar_ids) const {
  ChatRequest request;
  request.model_id = config_.model_id;
  request.temperature = config_.temperature;
  request.max_new_tokens = config_.max_new_tokens;
  request.messages.push_back(
      {"system", templates_.Render(config_.space.template_id,
                                   {{"options", config_.space.OptionsText()}}),
       {}});
  for (const std::string& id : exemplar_ids) {
    if (id == query.id) throw ValidationError("post " + id + " selected as its own exemplar");
    const PostRecord* ex = pool.Find(id);
    if (ex == nullptr) throw ValidationError("exemplar " + id + " not in the pool");
    auto gold = GoldLabel(*ex, config_.space);
    if (!gold) throw ValidationError("exemplar " + id + " has no gold label for this stage");
    request.messages.push_back({"user", RenderItem(*ex), {pool.ImagePath(*ex)}});
    request.messages.push_back({"assistant", *gold, {}});
  }
  request.messages.push_back({"user", RenderItem(query), {query_corpus.ImagePath(query)}});
  return request;
}

ChatRequest PromptBuilder::Retry(const ChatRequest& original,
                                 const std::string& failed_answer) const {
  ChatRequest retry = original;
  retry.messages.push_back({"assistant", failed_answer, {}});
  retry.messages.push_back(
      {"user", templates_.Render("detect_retry", {{"options", config_.space.OptionsText()}}), {}});
  return retry;
}

metrics::MetricReport ScorePredictions(const std::vector<PredictionRecord>& predictions,
                                       const LabelSpace& space, UnparseablePolicy policy) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& p : predictions) {
    if (p.predicted == kFailed) continue;
    if (p.predicted == kUnparseable && policy == UnparseablePolicy::kDrop) continue;
    pairs.emplace_back(p.gold, p.predicted);
  }
  return metrics::MacroF1(pairs, space.labels);
}

BenchmarkResult RunBenchmark(gateway::ModelGateway& gateway, const tagging::TemplateSet& templates,
                             exemplar::ExemplarSelector& selector, const BenchmarkInputs& inputs,
                             const DetectionConfig& config) {
  if (inputs.test == nullptr || inputs.pool == nullptr) {
    throw ValidationError("benchmark needs a test corpus and an exemplar pool");
  }
  config.strategy.Validate();
  if (config.model_id.empty()) throw ConfigError("no classifier model configured");

  std::vector<const PostRecord*> queries;
  for (const auto& post : inputs.test->records) {
    if (post.split == Split::kTest && GoldLabel(post, config.space)) queries.push_back(&post);
  }
  std::sort(queries.begin(), queries.end(),
            [](const PostRecord* a, const PostRecord* b) { return a->id < b->id; });
  if (queries.empty())
    throw ValidationError("no eligible test posts for stage " + config.space.name);

  PromptBuilder builder(templates, config, inputs.predicted);
  selector.Warm(config.strategy, config.workers);

  BenchmarkResult result;
  result.predictions.resize(queries.size());
  ParallelFor(queries.size(), config.workers, [&](size_t i) {
    const PostRecord& query = *queries[i];
    PredictionRecord& rec = result.predictions[i];
    rec.post_id = query.id;
    rec.gold = *GoldLabel(query, config.space);
    try {
      rec.exemplar_ids = selector.Select(*inputs.test, query, config.strategy);
      ChatRequest request = builder.Build(*inputs.test, query, *inputs.pool, rec.exemplar_ids);
      gateway::ChatResult answer = gateway.ChatComplete(request);
      rec.attempts = 1;
      rec.latency_ms = answer.latency_ms;
      rec.raw = answer.text;
      ParsedLabel parsed = ParseLabel(answer.text, config.space);
      if (!parsed.label) {
        answer = gateway.ChatComplete(builder.Retry(request, answer.text));
        rec.attempts = 2;
        rec.latency_ms += answer.latency_ms;
        rec.raw = answer.text;
        parsed = ParseLabel(answer.text, config.space);
      }
      if (parsed.label) {
        rec.predicted = *parsed.label;
      } else {
        rec.predicted = std::string(kUnparseable);
        rec.error = parsed.error;
      }
    } catch (const std::exception& e) {
      rec.predicted = std::string(kFailed);
      rec.error = e.what();
    }
  });

  for (const auto& p : result.predictions) {
    if (p.predicted == kFailed) ++result.failures;
    if (p.predicted == kUnparseable) ++result.unparseable;
  }
  result.valid = static_cast<double>(result.failures) <=
                 config.max_failure_rate * static_cast<double>(result.predictions.size());

  nlohmann::json config_json = config.ToJson();
  config_json["template_checksums"] = templates.Checksums();
  result.header = {{"config", config_json},
                   {"config_digest", Sha256Hex(config_json.dump())},
                   {"n_queries", queries.size()}};
  if (result.failures < result.predictions.size()) {
    result.report = ScorePredictions(result.predictions, config.space, config.policy);
  } else {
    result.report.warnings.push_back("every sample failed; no score");
  }
  result.report.config_digest = result.header["config_digest"];
  if (!result.valid) {
    result.report.warnings.push_back(fmt::format(
        "run invalid: {} of {} samples failed", result.failures, result.predictions.size()));
  }
  result.header["valid"] = result.valid;
  return result;
}

void WritePredictionFile(const std::filesystem::path& path, const nlohmann::json& header,
                         const std::vector<PredictionRecord>& predictions) {
  std::vector<nlohmann::json> lines;
  lines.push_back({{"header", header}});
  for (const auto& p : predictions) lines.push_back(p.ToJson());
  jsonl::WriteFile(path, lines);
}

std::vector<PredictionRecord> ReadPredictionFile(const std::filesystem::path& path,
                                                 nlohmann::json* header) {
  std::vector<PredictionRecord> out;
  auto errors = jsonl::ForEachRecord(path, [&](size_t, const nlohmann::json& j) {
    if (j.contains("header")) {
      if (header != nullptr) *header = j["header"];
      return;
    }
    out.push_back(PredictionRecord::FromJson(j));
  });
  if (!errors.empty()) {
    throw ValidationError(fmt::format("{}:{}: {}", path.string(), errors[0].line_number,
                                      errors[0].message));
  }
  return out;
}

}  // namespace memeguard::detect
